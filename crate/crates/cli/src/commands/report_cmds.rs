use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use auditmatch_core::corpus::{load_requirements, Corpus};
use auditmatch_core::metrics::{evaluate_run, AggregateReport};
use auditmatch_core::pipeline::{compare_runs, gold_for, plan_queries, read_results, QueryScope};
use auditmatch_core::rerank::{render_prompt, Candidate, CandidateSet, PromptTemplate};
use serde::Deserialize;

use super::run_cmds::write_evaluation;
use super::{CliError, MatchConfig};
use crate::{CompareArgs, EvaluateArgs, RenderPromptArgs};

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Score a run directory. Queries the run's configuration would answer
/// but that are missing from its results are an error.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let cfg: MatchConfig = read_json(&args.run.join("config.json"))?;
    let annotations = args
        .annotations
        .clone()
        .or(cfg.annotations.clone())
        .ok_or_else(|| CliError::Validation("no annotations given or configured".into()))?;
    let corpus = Corpus::load(&cfg.segments, &cfg.requirements, Some(&annotations))?;

    let results_path = args.run.join("results.jsonl");
    let file = fs::File::open(&results_path).map_err(|e| CliError::io(&results_path, e))?;
    let records = read_results(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", results_path.display())))?;
    let mut run = BTreeMap::new();
    for rec in records {
        let list = rec.final_list()?;
        if run.insert(rec.key.clone(), list).is_some() {
            return Err(CliError::Validation(format!(
                "{}: {} appears twice",
                results_path.display(),
                rec.key
            )));
        }
    }

    let mut expected = cfg.pipeline.clone();
    expected.query_scope = QueryScope::Annotated;
    let planned = plan_queries(&corpus, &expected)?;
    let gold = gold_for(&corpus, planned.iter().chain(run.keys()));
    let k = args.k.unwrap_or(cfg.pipeline.k);
    let eval =
        evaluate_run(&run, &gold, k, &cfg.pipeline.model_label()).map_err(|e| CliError::Validation(e.to_string()))?;

    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_evaluation(&out, &eval)?;
    Ok(eval.report.render_text())
}

fn report_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("report.json")
    } else {
        input.to_path_buf()
    }
}

pub fn cmd_compare(args: &CompareArgs) -> Result<String, CliError> {
    let reports: Vec<AggregateReport> = args
        .inputs
        .iter()
        .map(|p| read_json(&report_path(p)))
        .collect::<Result<_, _>>()?;
    let mut table = compare_runs(&reports)?;
    if let Some(c) = &args.corner {
        table = table.with_corner(c.clone());
    }
    Ok(if args.markdown {
        table.render_markdown()
    } else {
        table.render_text()
    })
}

#[derive(Deserialize)]
struct CandidateLine {
    id: String,
    text: String,
}

/// Exactly the text sent to a model without role support; no trailing
/// newline is added.
pub fn cmd_render_prompt(args: &RenderPromptArgs) -> Result<String, CliError> {
    let template_id = args
        .template
        .parse()
        .map_err(|e: auditmatch_core::rerank::RerankError| CliError::Validation(e.to_string()))?;
    let requirement = load_requirements(&args.requirements)?
        .into_iter()
        .find(|r| r.id == args.requirement_id)
        .ok_or_else(|| CliError::Validation(format!("unknown requirement \"{}\"", args.requirement_id)))?;
    let text = fs::read_to_string(&args.candidates).map_err(|e| CliError::io(&args.candidates, e))?;
    let mut candidates = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: CandidateLine = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("{}:{}: {e}", args.candidates.display(), i + 1)))?;
        candidates.push(Candidate::new(c.id, c.text));
    }
    let cs = CandidateSet::new(requirement, candidates)?;
    Ok(render_prompt(&PromptTemplate::builtin(template_id), &cs)?)
}
