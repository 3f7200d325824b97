use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingStore, StoreError, Vector};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("no precomputed vector for \"{0}\"")]
    MissingId(String),
    #[error("text for \"{0}\" is empty")]
    EmptyText(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider protocol error: {0}")]
    Protocol(String),
    #[error("provider returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("provider returned dim {found} for \"{id}\", expected {expected}")]
    DimDisagreement { id: String, expected: usize, found: usize },
    #[error("batch [{}] failed: {source}", ids.join(", "))]
    Batch {
        ids: Vec<String>,
        #[source]
        source: Box<ProviderError>,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One text to embed, with the entity id it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct EmbedItem<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// Turns texts into vectors.
///
/// Implementations return one vector per item, in input order, all of the
/// same dimension, and are deterministic for identical inputs.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vector>, ProviderError>;

    /// Seed recorded in stores built by this provider; 0 if not applicable.
    fn seed(&self) -> u64 {
        0
    }
}

/// Deterministic test encoder: a seeded hash of the text expanded into a
/// Gaussian vector and scaled to unit length.
#[derive(Debug, Clone)]
pub struct HashProvider {
    seed: u64,
    dim: usize,
}

impl HashProvider {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        Self { seed, dim }
    }

    pub fn embed_text(&self, text: &str) -> Vector {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(text.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        let mut rng = rand_chacha::ChaCha8Rng::from_seed(key);
        loop {
            let raw: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = super::norm(&raw);
            if n > 0.0 {
                return Vector::new(raw.into_iter().map(|x| x / n).collect()).expect("finite unit vector");
            }
        }
    }
}

impl EmbeddingProvider for HashProvider {
    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vector>, ProviderError> {
        Ok(items.iter().map(|it| self.embed_text(it.text)).collect())
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

/// Serves vectors from a precomputed store, looked up by entity id.
#[derive(Debug, Clone)]
pub struct FileProvider {
    store: EmbeddingStore,
}

impl FileProvider {
    pub fn new(store: EmbeddingStore) -> Self {
        Self { store }
    }

    pub fn open(path: &std::path::Path) -> Result<Self, StoreError> {
        super::load_store(path).map(Self::new)
    }
}

impl EmbeddingProvider for FileProvider {
    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vector>, ProviderError> {
        items
            .iter()
            .map(|it| {
                self.store
                    .get(it.id)
                    .cloned()
                    .ok_or_else(|| ProviderError::MissingId(it.id.to_owned()))
            })
            .collect()
    }

    fn seed(&self) -> u64 {
        self.store.seed()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteProviderConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/embed".into(),
            api_key_env: "AUDITMATCH_EMBED_API_KEY".into(),
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP encoder service: `POST {"texts": [...]}` answered by
/// `{"vectors": [[...], ...]}`.
pub struct RemoteProvider {
    config: RemoteProviderConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl RemoteProvider {
    pub fn new(config: RemoteProviderConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent, api_key }
    }

    fn attempt(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, (bool, ProviderError)> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(EmbedRequest { texts: texts.to_vec() })
            .map_err(|e| (true, ProviderError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retryable = status == 429 || status >= 500;
            return Err((retryable, ProviderError::Transport(format!("HTTP status {status}"))));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, ProviderError::Protocol(e.to_string())))?;
        Ok(body.vectors)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vector>, ProviderError> {
        let texts: Vec<&str> = items.iter().map(|it| it.text).collect();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 1;
        let raw = loop {
            match self.attempt(&texts) {
                Ok(v) => break v,
                Err((true, e)) if attempt < self.config.max_attempts => {
                    log::warn!("embedding request failed (attempt {attempt}): {e}; retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        };
        if raw.len() != items.len() {
            return Err(ProviderError::CountMismatch {
                expected: items.len(),
                found: raw.len(),
            });
        }
        raw.into_iter()
            .zip(items)
            .map(|(v, it)| Vector::new(v).map_err(|e| ProviderError::Protocol(format!("\"{}\": {e}", it.id))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// Maximum number of batches in flight at once.
    pub concurrency: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            concurrency: 4,
        }
    }
}

pub fn embed_corpus(
    provider: &dyn EmbeddingProvider,
    corpus: &[(String, String)],
) -> Result<EmbeddingStore, ProviderError> {
    embed_corpus_with(provider, corpus, EmbedOptions::default())
}

/// Embed `(id, text)` pairs in batches and collect them into a store.
///
/// Batches may complete in any order; the store does not depend on it.
pub fn embed_corpus_with(
    provider: &dyn EmbeddingProvider,
    corpus: &[(String, String)],
    opts: EmbedOptions,
) -> Result<EmbeddingStore, ProviderError> {
    if let Some((id, _)) = corpus.iter().find(|(_, t)| t.trim().is_empty()) {
        return Err(ProviderError::EmptyText(id.clone()));
    }
    let batches: Vec<&[(String, String)]> = corpus.chunks(opts.batch_size.max(1)).collect();
    type Slot = Option<Result<Vec<Vector>, ProviderError>>;
    let results: Mutex<Vec<Slot>> = Mutex::new((0..batches.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = opts.concurrency.clamp(1, batches.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(b) else { break };
                let items: Vec<EmbedItem<'_>> = batch.iter().map(|(id, text)| EmbedItem { id, text }).collect();
                let out = provider.embed(&items).and_then(|vs| {
                    if vs.len() == items.len() {
                        Ok(vs)
                    } else {
                        Err(ProviderError::CountMismatch {
                            expected: items.len(),
                            found: vs.len(),
                        })
                    }
                });
                results.lock().unwrap()[b] = Some(out);
            });
        }
    });

    let mut dim: Option<usize> = None;
    let mut pending = Vec::with_capacity(corpus.len());
    for (batch, result) in batches.iter().zip(results.into_inner().unwrap()) {
        let vectors = result.expect("every batch ran").map_err(|e| ProviderError::Batch {
            ids: batch.iter().map(|(id, _)| id.clone()).collect(),
            source: Box::new(e),
        })?;
        for ((id, _), v) in batch.iter().zip(vectors) {
            let expected = *dim.get_or_insert(v.dim());
            if v.dim() != expected {
                return Err(ProviderError::DimDisagreement {
                    id: id.clone(),
                    expected,
                    found: v.dim(),
                });
            }
            pending.push((id.clone(), v));
        }
    }
    let mut store = EmbeddingStore::new(dim.unwrap_or(1))?.with_seed(provider.seed());
    for (id, v) in pending {
        store.insert(id, v)?;
    }
    Ok(store)
}
