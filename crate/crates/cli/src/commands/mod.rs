//! Subcommand implementations.

mod corpus_cmds;
mod report_cmds;
mod run_cmds;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use auditmatch_core::corpus::CorpusError;
use auditmatch_core::embedding::{ProviderError, StoreError};
use auditmatch_core::pipeline::{PipelineConfig, PipelineError};
use auditmatch_core::rerank::{RemoteChatConfig, RerankError};
use auditmatch_core::retrieval::RetrievalError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use corpus_cmds::{cmd_embed, cmd_index, cmd_ingest, cmd_synth};
pub use report_cmds::{cmd_compare, cmd_evaluate, cmd_render_prompt};
pub use run_cmds::{cmd_match, cmd_prompt_study};

/// Failure of a command. Validation errors are problems with the inputs;
/// runtime errors are everything else (I/O, network).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => crate::EXIT_VALIDATION,
            Self::Runtime(_) => crate::EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: &Path, e: io::Error) -> Self {
        Self::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Self::Runtime(e.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Io(_) => Self::Runtime(e.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) => Self::Runtime(e.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::EmptyText(_) => Self::Validation(e.to_string()),
            e => Self::Runtime(e.to_string()),
        }
    }
}

impl From<RerankError> for CliError {
    fn from(e: RerankError) -> Self {
        match e {
            RerankError::Client { .. } => Self::Runtime(e.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Retrieval(e) => e.into(),
            PipelineError::Rerank(e) => e.into(),
            e => Self::Validation(e.to_string()),
        }
    }
}

/// A run configuration file: input paths plus every pipeline setting.
///
/// Relative paths are resolved against the file's directory on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub segments: PathBuf,
    pub requirements: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    pub store: PathBuf,
    /// Reply text for the `mock-scripted` client.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted_response: Option<String>,
    /// Settings for the `remote` client. The API key is read from the
    /// environment variable named here, never from this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteChatConfig>,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

const PATH_KEYS: [&str; 6] = [
    "segments",
    "requirements",
    "annotations",
    "store",
    "scripted_response",
    "remote",
];

fn pipeline_keys() -> Vec<String> {
    let full = PipelineConfig {
        label: Some(String::new()),
        reports: vec![String::new()],
        ..PipelineConfig::default()
    };
    match serde_json::to_value(full) {
        Ok(serde_json::Value::Object(m)) => m.into_iter().map(|(k, _)| k).collect(),
        _ => unreachable!("struct serializes to an object"),
    }
}

impl MatchConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let Some(obj) = value.as_object() else {
            return Err(CliError::Validation(format!(
                "{}: expected a JSON object",
                path.display()
            )));
        };
        let known = pipeline_keys();
        if let Some(k) = obj
            .keys()
            .find(|k| !PATH_KEYS.contains(&k.as_str()) && !known.contains(k))
        {
            return Err(CliError::Validation(format!("{}: unknown key \"{k}\"", path.display())));
        }
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.segments);
        resolve(&mut cfg.requirements);
        resolve(&mut cfg.store);
        if let Some(a) = cfg.annotations.as_mut() {
            resolve(a);
        }
        Ok(cfg)
    }

    /// Input files whose digests go into the manifest.
    pub fn inputs(&self) -> Vec<&Path> {
        let mut v = vec![
            self.segments.as_path(),
            self.requirements.as_path(),
            self.store.as_path(),
        ];
        if let Some(a) = &self.annotations {
            v.push(a);
        }
        v
    }
}

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: PathBuf,
    pub config: MatchConfig,
    /// Path to lowercase hex SHA-256, taken before the run started.
    pub input_digests: BTreeMap<String, String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub(crate) fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub(crate) fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Write via a sibling temporary file and rename into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn store_err(path: &Path) -> impl FnOnce(StoreError) -> CliError + '_ {
    move |e| match e {
        StoreError::Io(io) => CliError::io(path, io),
        e => e.into(),
    }
}

pub(crate) fn index_err(path: &Path) -> impl FnOnce(RetrievalError) -> CliError + '_ {
    move |e| match e {
        RetrievalError::Io(io) => CliError::io(path, io),
        e => e.into(),
    }
}

pub(crate) fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}
