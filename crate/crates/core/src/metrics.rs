//! Top-K evaluation metrics.
//!
//! For a requirement `r` with gold set `A` and ranked predictions `P`:
//!
//! - precision   = |P[..k] ∩ A| / k
//! - recall      = |P[..k] ∩ A| / |A|
//! - sensitivity = |P[..k] ∩ A| / min(k, |A|)
//! - F1          = harmonic mean of precision and recall
//! - AP          = (1 / min(k, |A|)) * Σ_{i<=k} precision@i * rel(i)
//!
//! Requirements with an empty gold set have no defined values; they are
//! excluded from averages and counted separately.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::retrieval::RankedList;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("prediction \"{0}\" appears more than once")]
    DuplicatePrediction(String),
    #[error("{0} has gold segments but no ranked list in the run")]
    MissingFromRun(QueryKey),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// One evaluated query: a requirement, optionally scoped to one report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_id: Option<String>,
    pub requirement_id: String,
}

impl QueryKey {
    pub fn global(requirement_id: impl Into<String>) -> Self {
        Self {
            report_id: None,
            requirement_id: requirement_id.into(),
        }
    }

    pub fn in_report(report_id: impl Into<String>, requirement_id: impl Into<String>) -> Self {
        Self {
            report_id: Some(report_id.into()),
            requirement_id: requirement_id.into(),
        }
    }
}

impl std::fmt::Display for QueryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.report_id {
            Some(r) => write!(f, "requirement \"{}\" in report \"{r}\"", self.requirement_id),
            None => write!(f, "requirement \"{}\"", self.requirement_id),
        }
    }
}

fn check(gold: &BTreeSet<String>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    Ok(())
}

/// `|P[..k] ∩ A|`.
pub fn hits_at_k<S: AsRef<str>>(predicted: &[S], gold: &BTreeSet<String>, k: usize) -> usize {
    predicted.iter().take(k).filter(|p| gold.contains(p.as_ref())).count()
}

pub fn precision_at_k<S: AsRef<str>>(predicted: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    check(gold, k)?;
    Ok(hits_at_k(predicted, gold, k) as f64 / k as f64)
}

pub fn recall_at_k<S: AsRef<str>>(predicted: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    check(gold, k)?;
    Ok(hits_at_k(predicted, gold, k) as f64 / gold.len() as f64)
}

/// Recall with the denominator capped at `k`.
pub fn sensitivity_at_k<S: AsRef<str>>(predicted: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    check(gold, k)?;
    Ok(hits_at_k(predicted, gold, k) as f64 / k.min(gold.len()) as f64)
}

pub fn f1_at_k<S: AsRef<str>>(predicted: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    let p = precision_at_k(predicted, gold, k)?;
    let r = recall_at_k(predicted, gold, k)?;
    Ok(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

/// Truncated average precision normalized by `min(k, |A|)`.
pub fn average_precision<S: AsRef<str>>(predicted: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    check(gold, k)?;
    let mut seen = HashSet::new();
    for p in predicted {
        if !seen.insert(p.as_ref()) {
            return Err(MetricError::DuplicatePrediction(p.as_ref().to_owned()));
        }
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, p) in predicted.iter().take(k).enumerate() {
        if gold.contains(p.as_ref()) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(gold.len()) as f64)
}

/// All metrics for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementEval {
    #[serde(flatten)]
    pub key: QueryKey,
    pub k: usize,
    pub hits: usize,
    pub gold_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub ap: f64,
}

impl RequirementEval {
    pub fn compute<S: AsRef<str>>(key: QueryKey, predicted: &[S], gold: &BTreeSet<String>, k: usize) -> Result<Self> {
        Ok(Self {
            hits: hits_at_k(predicted, gold, k),
            gold_size: gold.len(),
            precision: precision_at_k(predicted, gold, k)?,
            recall: recall_at_k(predicted, gold, k)?,
            sensitivity: sensitivity_at_k(predicted, gold, k)?,
            f1: f1_at_k(predicted, gold, k)?,
            ap: average_precision(predicted, gold, k)?,
            key,
            k,
        })
    }
}

/// Arithmetic means over a group of evaluated queries. `None` when the
/// group is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub n: usize,
    pub sensitivity: Option<f64>,
    pub map: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl Means {
    pub fn of<'a>(evals: impl IntoIterator<Item = &'a RequirementEval>) -> Self {
        let evals: Vec<&RequirementEval> = evals.into_iter().collect();
        let n = evals.len();
        let mean = |f: fn(&RequirementEval) -> f64| (n > 0).then(|| evals.iter().map(|e| f(e)).sum::<f64>() / n as f64);
        Self {
            n,
            sensitivity: mean(|e| e.sensitivity),
            map: mean(|e| e.ap),
            f1: mean(|e| e.f1),
            precision: mean(|e| e.precision),
            recall: mean(|e| e.recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model_label: String,
    pub k: usize,
    pub n_requirements_evaluated: usize,
    /// Queries in the run whose gold set was empty.
    pub n_excluded: usize,
    pub mean_sensitivity: Option<f64>,
    pub map: Option<f64>,
    pub mean_f1: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_report: BTreeMap<String, Means>,
}

impl AggregateReport {
    pub fn from_evals(model_label: impl Into<String>, k: usize, evals: &[RequirementEval], n_excluded: usize) -> Self {
        let all = Means::of(evals);
        let mut groups: BTreeMap<String, Vec<&RequirementEval>> = BTreeMap::new();
        for e in evals {
            if let Some(r) = &e.key.report_id {
                groups.entry(r.clone()).or_default().push(e);
            }
        }
        Self {
            model_label: model_label.into(),
            k,
            n_requirements_evaluated: all.n,
            n_excluded,
            mean_sensitivity: all.sensitivity,
            map: all.map,
            mean_f1: all.f1,
            mean_precision: all.precision,
            mean_recall: all.recall,
            per_report: groups.into_iter().map(|(r, es)| (r, Means::of(es))).collect(),
        }
    }

    /// Fixed-width summary: one line per metric, values in percent.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Model: {}", self.model_label);
        let _ = writeln!(
            out,
            "K = {}, evaluated = {}, excluded (empty gold) = {}",
            self.k, self.n_requirements_evaluated, self.n_excluded
        );
        let _ = writeln!(out, "{:<14}{:>10}", "Metric", "in %");
        for (name, v) in [
            ("Sensitivity", self.mean_sensitivity),
            ("MAP", self.map),
            ("F1", self.mean_f1),
            ("Precision", self.mean_precision),
            ("Recall", self.mean_recall),
        ] {
            let _ = writeln!(out, "{:<14}{:>10}", name, format_percent(v));
        }
        out
    }
}

/// Percent with two decimals, or `n/a`.
pub fn format_percent(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "n/a".to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: AggregateReport,
    pub details: Vec<RequirementEval>,
}

/// Score every ranked list in `run` against `gold` and macro-average.
///
/// Every key of `gold` with a non-empty set must appear in `run`. Run
/// entries whose gold set is empty or absent are counted as excluded.
pub fn evaluate_run(
    run: &BTreeMap<QueryKey, RankedList>,
    gold: &BTreeMap<QueryKey, BTreeSet<String>>,
    k: usize,
    model_label: &str,
) -> Result<Evaluation> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if let Some((key, _)) = gold
        .iter()
        .find(|(key, set)| !set.is_empty() && !run.contains_key(*key))
    {
        return Err(MetricError::MissingFromRun(key.clone()));
    }
    let mut details = Vec::new();
    let mut excluded = 0;
    for (key, list) in run {
        match gold.get(key) {
            Some(set) if !set.is_empty() => {
                details.push(RequirementEval::compute(key.clone(), &list.ids(), set, k)?);
            }
            _ => excluded += 1,
        }
    }
    Ok(Evaluation {
        report: AggregateReport::from_evals(model_label, k, &details, excluded),
        details,
    })
}
