use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use auditmatch_core::corpus::Corpus;
use auditmatch_core::embedding::{load_store, EmbeddingStore};
use auditmatch_core::metrics::Evaluation;
use auditmatch_core::pipeline::{compare_runs, run_match, run_prompt_study, write_results, IndexKind, MatchRun, Mode};
use auditmatch_core::rerank::{ChatClient, OracleClient, RemoteChatClient, ScriptedClient};
use auditmatch_core::TemplateId;

use super::{sha256_file, store_err, to_json_pretty, unix_ms, write_atomic, CliError, MatchConfig, RunManifest};
use crate::{Global, IndexKindArg, MatchArgs, ModeArg, PromptStudyArgs};

fn config_path(g: &Global) -> Result<&Path, CliError> {
    g.config
        .as_deref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))
}

fn parse_template(s: &str) -> Result<TemplateId, CliError> {
    s.trim()
        .parse()
        .map_err(|e: auditmatch_core::rerank::RerankError| CliError::Validation(e.to_string()))
}

/// Load the config and apply command-line overrides.
fn resolve_config(g: &Global, args: &MatchArgs) -> Result<(PathBuf, MatchConfig), CliError> {
    let path = config_path(g)?;
    let mut cfg = MatchConfig::load(path)?;
    let p = &mut cfg.pipeline;
    if let Some(seed) = g.seed {
        p.seed = seed;
    }
    if let Some(m) = args.mode {
        p.mode = match m {
            ModeArg::RetrievalOnly => Mode::RetrievalOnly,
            ModeArg::TwoStage => Mode::TwoStage,
        };
    }
    if let Some(kind) = args.index_kind {
        p.index_kind = match kind {
            IndexKindArg::Exact => IndexKind::Exact,
            IndexKindArg::Clustered => IndexKind::Clustered,
        };
    }
    if let Some(c) = &args.client {
        p.client = c.clone();
    }
    if let Some(t) = &args.template {
        p.template_id = parse_template(t)?;
    }
    if let Some(k) = args.k {
        p.k = k;
    }
    if let Some(m) = args.m {
        p.m = m;
    }
    if let Some(l) = &args.label {
        p.label = Some(l.clone());
    }
    p.validate()?;
    Ok((path.to_path_buf(), cfg))
}

fn load_inputs(cfg: &MatchConfig) -> Result<(Corpus, EmbeddingStore), CliError> {
    let corpus = Corpus::load(&cfg.segments, &cfg.requirements, cfg.annotations.as_deref())?;
    let store = load_store(&cfg.store).map_err(store_err(&cfg.store))?;
    Ok((corpus, store))
}

/// The chat client named by the config, or `None` for retrieval-only runs.
pub(crate) fn build_client(cfg: &MatchConfig, corpus: &Corpus) -> Result<Option<Box<dyn ChatClient>>, CliError> {
    if cfg.pipeline.mode == Mode::RetrievalOnly {
        return Ok(None);
    }
    let client: Box<dyn ChatClient> = match cfg.pipeline.client.as_str() {
        "mock-oracle" => {
            if cfg.annotations.is_none() {
                return Err(CliError::Validation("client mock-oracle needs annotations".into()));
            }
            Box::new(OracleClient::from_annotations(corpus.annotations()))
        }
        "mock-scripted" => Box::new(ScriptedClient::constant(
            cfg.scripted_response.clone().unwrap_or_else(|| "[]".into()),
        )),
        "remote" => Box::new(RemoteChatClient::new(cfg.remote.clone().unwrap_or_default())),
        other => {
            return Err(CliError::Validation(format!(
                "unknown client \"{other}\" (expected mock-oracle, mock-scripted or remote)"
            )))
        }
    };
    Ok(Some(client))
}

pub(crate) fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<(), CliError> {
    write_atomic(&dir.join("report.json"), &to_json_pretty(&eval.report))?;
    write_atomic(&dir.join("report.txt"), eval.report.render_text().as_bytes())?;
    let mut lines = Vec::new();
    for d in &eval.details {
        serde_json::to_writer(&mut lines, d).expect("serializable");
        lines.push(b'\n');
    }
    write_atomic(&dir.join("per_requirement.jsonl"), &lines)
}

fn write_run(dir: &Path, cfg: &MatchConfig, run: &MatchRun, eval: Option<&Evaluation>) -> Result<(), CliError> {
    write_atomic(&dir.join("config.json"), &to_json_pretty(cfg))?;
    let mut results = Vec::new();
    write_results(&mut results, &run.results).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&dir.join("results.jsonl"), &results)?;
    write_atomic(&dir.join("stats.json"), &to_json_pretty(&run.stats))?;
    if let Some(eval) = eval {
        write_evaluation(dir, eval)?;
    }
    Ok(())
}

/// Run the configured pipeline and write its artifacts to `--out`.
///
/// Artifacts are assembled in a hidden sibling directory that is renamed
/// into place only when everything succeeded.
pub fn cmd_match(args: &MatchArgs, g: &Global) -> Result<String, CliError> {
    let started = unix_ms();
    let (config_path, cfg) = resolve_config(g, args)?;
    let out = &args.out;
    if out.exists() && !args.force {
        return Err(CliError::Validation(format!(
            "{} exists (use --force to replace it)",
            out.display()
        )));
    }

    let mut input_digests = BTreeMap::new();
    input_digests.insert(config_path.display().to_string(), sha256_file(&config_path)?);
    for p in cfg.inputs() {
        input_digests.insert(p.display().to_string(), sha256_file(p)?);
    }

    let (corpus, store) = load_inputs(&cfg)?;
    let client = build_client(&cfg, &corpus)?;
    let run = run_match(&corpus, &store, &cfg.pipeline, client.as_deref())?;
    let eval = match cfg.annotations {
        Some(_) => Some(run.evaluate(&corpus, None)?),
        None => None,
    };

    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let name = out
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Validation(format!("bad output path {}", out.display())))?;
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| CliError::io(&staging, e))?;

    let finish = || -> Result<(), CliError> {
        write_run(&staging, &cfg, &run, eval.as_ref())?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_path: config_path.clone(),
            config: cfg.clone(),
            input_digests,
            started_unix_ms: started,
            finished_unix_ms: unix_ms(),
        };
        write_atomic(&staging.join("manifest.json"), &to_json_pretty(&manifest))?;
        if out.exists() {
            fs::remove_dir_all(out).map_err(|e| CliError::io(out, e))?;
        }
        fs::rename(&staging, out).map_err(|e| CliError::io(out, e))
    };
    if let Err(e) = finish() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }

    let mut text = format!(
        "{}: {} queries -> {}\n",
        cfg.pipeline.model_label(),
        run.results.len(),
        out.display()
    );
    if run.stats.n_repaired > 0 {
        let _ = writeln!(
            text,
            "{} answers needed repair: {:?}",
            run.stats.n_repaired, run.stats.repairs
        );
    }
    if let Some(eval) = &eval {
        text.push_str(&eval.report.render_text());
    }
    Ok(text)
}

/// Run each template over one seeded sample and tabulate the results.
pub fn cmd_prompt_study(args: &PromptStudyArgs, g: &Global) -> Result<String, CliError> {
    let (_, mut cfg) = resolve_config(g, &MatchArgs::default())?;
    cfg.pipeline.mode = Mode::TwoStage;
    let templates: Vec<TemplateId> = args
        .templates
        .iter()
        .map(|t| parse_template(t))
        .collect::<Result<_, _>>()?;
    if cfg.annotations.is_none() {
        return Err(CliError::Validation("prompt-study needs annotations".into()));
    }
    let (corpus, store) = load_inputs(&cfg)?;
    let client = build_client(&cfg, &corpus)?.expect("two_stage has a client");
    let reports = run_prompt_study(
        &corpus,
        &store,
        &cfg.pipeline,
        &templates,
        args.sample_size,
        g.seed.unwrap_or(cfg.pipeline.seed),
        client.as_ref(),
    )?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for r in &reports {
            write_atomic(&dir.join(format!("{}.json", r.model_label)), &to_json_pretty(r))?;
        }
    }
    let table = compare_runs(&reports)?.with_corner("Prompt \\ in %");
    Ok(if args.markdown {
        table.render_markdown()
    } else {
        table.render_text()
    })
}
