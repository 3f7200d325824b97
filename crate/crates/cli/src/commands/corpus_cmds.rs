use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use auditmatch_core::corpus::{load_segments, write_annotations, write_requirements, write_segments, Corpus};
use auditmatch_core::embedding::{
    embed_corpus_with, load_store, save_store, EmbedOptions, EmbeddingProvider, HashProvider, RemoteProvider,
    RemoteProviderConfig,
};
use auditmatch_core::retrieval::{
    build_clustered_index, build_exact_index, default_num_clusters, save_index, ClusteredParams, Index, Namespace,
};
use auditmatch_core::synth::{generate, SynthConfig};

use super::{index_err, store_err, to_json_pretty, CliError};
use crate::{EmbedArgs, Global, IndexArgs, IndexKindArg, IngestArgs, ProviderKind, Scale, SynthArgs};

pub fn cmd_ingest(args: &IngestArgs) -> Result<String, CliError> {
    let corpus = Corpus::load(&args.segments, &args.requirements, args.annotations.as_deref())?;
    let ann = corpus.annotations();
    for w in ann.warnings() {
        log::warn!("{w}");
    }
    for r in ann.empty_requirements() {
        log::warn!("requirement \"{r}\" has an empty annotation list");
    }
    Ok(format!(
        "OK: {} segments, {} requirements, {} annotations\n",
        corpus.segments().len(),
        corpus.requirements().len(),
        ann.link_count()
    ))
}

pub fn cmd_embed(args: &EmbedArgs, g: &Global) -> Result<String, CliError> {
    let corpus = Corpus::load(&args.segments, &args.requirements, None)?;
    let items: Vec<(String, String)> = corpus
        .segments()
        .iter()
        .map(|s| (s.id.clone(), s.text.clone()))
        .chain(corpus.requirements().iter().map(|r| (r.id.clone(), r.text.clone())))
        .collect();
    let provider: Box<dyn EmbeddingProvider> = match args.provider {
        ProviderKind::Hash => {
            if args.dim == 0 {
                return Err(CliError::Validation("--dim must be at least 1".into()));
            }
            Box::new(HashProvider::new(g.seed.unwrap_or(0), args.dim))
        }
        ProviderKind::Remote => {
            let mut cfg = RemoteProviderConfig::default();
            if let Some(e) = &args.endpoint {
                cfg.endpoint = e.clone();
            }
            Box::new(RemoteProvider::new(cfg))
        }
    };
    let opts = EmbedOptions {
        batch_size: args.batch_size.max(1),
        ..EmbedOptions::default()
    };
    let store = embed_corpus_with(provider.as_ref(), &items, opts)?;
    save_store(&store, &args.out).map_err(store_err(&args.out))?;
    Ok(format!(
        "embedded {} texts (dim {}) -> {}\n",
        store.len(),
        store.dim(),
        args.out.display()
    ))
}

/// File name for a report's index, with path-hostile characters replaced.
fn index_file_name(report_id: &str) -> String {
    let safe: String = report_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.ridx")
}

pub fn cmd_index(args: &IndexArgs, g: &Global) -> Result<String, CliError> {
    let store = load_store(&args.store).map_err(store_err(&args.store))?;
    let segments = load_segments(&args.segments)?;
    let seed = g.seed.unwrap_or(0);

    let targets: Vec<(Namespace, PathBuf)> = if args.per_report {
        fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
        let mut reports: Vec<&str> = Vec::new();
        for s in &segments {
            if !reports.contains(&s.report_id.as_str()) {
                reports.push(&s.report_id);
            }
        }
        reports
            .into_iter()
            .map(|r| (Namespace::report(r), args.out.join(index_file_name(r))))
            .collect()
    } else {
        let ns = match &args.namespace {
            Some(r) => {
                if !segments.iter().any(|s| &s.report_id == r) {
                    return Err(CliError::Validation(format!("unknown report \"{r}\"")));
                }
                Namespace::report(r.clone())
            }
            None => Namespace::All,
        };
        vec![(ns, args.out.clone())]
    };

    let mut out = String::new();
    for (ns, path) in targets {
        let index = match args.kind {
            IndexKindArg::Exact => Index::Exact(build_exact_index(&store, &segments, ns.clone())?),
            IndexKindArg::Clustered => {
                let population = segments.iter().filter(|s| ns.contains(s)).count();
                let params = ClusteredParams {
                    num_clusters: args.clusters.unwrap_or_else(|| default_num_clusters(population)),
                    seed,
                    max_iters: args.max_iters,
                };
                let (index, outcome) = build_clustered_index(&store, &segments, ns.clone(), params)?;
                log::info!(
                    "{ns}: k-means {} after {} iterations, objective {:.6}",
                    if outcome.converged { "converged" } else { "stopped" },
                    outcome.iterations,
                    outcome.objective_history.last().copied().unwrap_or(0.0)
                );
                Index::Clustered(index)
            }
        };
        save_index(&index, &path).map_err(index_err(&path))?;
        let _ = write!(out, "{ns}: {} segments", index.len());
        if let Index::Clustered(c) = &index {
            let _ = write!(out, ", {} clusters", c.num_clusters());
        }
        let _ = writeln!(out, " -> {}", path.display());
    }
    Ok(out)
}

pub fn cmd_synth(args: &SynthArgs, g: &Global) -> Result<String, CliError> {
    let seed = g.seed.unwrap_or(0);
    let cfg = match args.scale {
        Scale::Small => SynthConfig::small(seed),
        Scale::Full => SynthConfig::full_scale(seed),
    };
    let fx = generate(&cfg);
    let dir = &args.out;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_segments(&dir.join("segments.jsonl"), fx.corpus.segments())?;
    write_requirements(&dir.join("requirements.jsonl"), fx.corpus.requirements())?;
    write_annotations(&dir.join("annotations.jsonl"), fx.corpus.annotations())?;
    let store_path = dir.join("store.embs");
    save_store(&fx.store, &store_path).map_err(store_err(&store_path))?;
    let config = super::MatchConfig {
        segments: "segments.jsonl".into(),
        requirements: "requirements.jsonl".into(),
        annotations: Some("annotations.jsonl".into()),
        store: "store.embs".into(),
        scripted_response: None,
        remote: None,
        pipeline: auditmatch_core::PipelineConfig {
            provider: "synthetic".into(),
            seed,
            ..Default::default()
        },
    };
    write_file(&dir.join("match.json"), &to_json_pretty(&config))?;
    Ok(format!(
        "wrote {} segments, {} requirements, {} annotations and a {}-dim store to {}\n",
        fx.corpus.segments().len(),
        fx.corpus.requirements().len(),
        fx.corpus.annotations().link_count(),
        fx.store.dim(),
        dir.display()
    ))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
