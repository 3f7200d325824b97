//! End-to-end runs: retrieval only, or retrieval followed by re-ranking.
//!
//! A run is a list of queries, one per (report, requirement) pair under the
//! per-report policy or one per requirement under the global policy. Each
//! query gets a final [`RankedList`] of at most `k` segments. Two-stage
//! runs keep stage-one scores on the chosen segments.

mod artifacts;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use artifacts::{read_results, write_results, QueryRecord};
pub use table::{compare_runs, ComparisonRow, ComparisonTable, TABLE_COLUMNS};

use crate::corpus::Corpus;
use crate::embedding::EmbeddingStore;
use crate::metrics::{evaluate_run, AggregateReport, Evaluation, MetricError, QueryKey};
use crate::rerank::{
    rerank, Candidate, CandidateSet, ChatClient, PromptTemplate, Repair, RerankError, RerankResult, TemplateId,
};
use crate::retrieval::{
    build_clustered_index, build_exact_index, default_n_probe, default_num_clusters, ClusteredIndex, ClusteredParams,
    ExactIndex, Namespace, RankedEntry, RankedList, RetrievalError,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no embedding for ids: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("unknown report \"{0}\"")]
    UnknownReport(String),
    #[error("two_stage mode needs a chat client")]
    NoClient,
    #[error("sample of {requested} requested but only {available} annotated queries exist")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("reports disagree on k: {0:?}")]
    MixedK(Vec<usize>),
    #[error("nothing to compare")]
    NoReports,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RetrievalOnly,
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Exact,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamespacePolicy {
    /// One index per report; queries see only their own report.
    PerReport,
    /// One index over every segment.
    Global,
}

/// Which queries a run answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryScope {
    /// Only queries with at least one gold segment.
    Annotated,
    /// Every requirement, in every report under the per-report policy.
    All,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RetrievalOnly => "retrieval_only",
            Self::TwoStage => "two_stage",
        })
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Clustered => "clustered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Row label in reports. Derived from the other fields when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub mode: Mode,
    pub index_kind: IndexKind,
    /// Stage-one width in two_stage mode.
    pub m: usize,
    pub k: usize,
    pub template_id: TemplateId,
    /// Name of the embedding source; recorded, not interpreted.
    pub provider: String,
    pub client: String,
    pub namespace_policy: NamespacePolicy,
    pub query_scope: QueryScope,
    /// Restrict the run to these reports. Empty means all.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<String>,
    pub seed: u64,
    /// Per namespace; `ceil(sqrt(N))` when absent.
    pub num_clusters: Option<usize>,
    /// `ceil(num_clusters / 4)` when absent.
    pub n_probe: Option<usize>,
    pub max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            label: None,
            mode: Mode::RetrievalOnly,
            index_kind: IndexKind::Exact,
            m: 15,
            k: 5,
            template_id: TemplateId::A,
            provider: "store".into(),
            client: "mock-oracle".into(),
            namespace_policy: NamespacePolicy::PerReport,
            query_scope: QueryScope::Annotated,
            reports: Vec::new(),
            seed: 0,
            num_clusters: None,
            n_probe: None,
            max_iters: 100,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_owned()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.mode == Mode::TwoStage && self.m < self.k {
            return bad("m must be at least k in two_stage mode");
        }
        if self.num_clusters == Some(0) || self.n_probe == Some(0) || self.max_iters == 0 {
            return bad("num_clusters, n_probe and max_iters must be at least 1");
        }
        Ok(())
    }

    /// Number of stage-one results per query.
    pub fn stage1_width(&self) -> usize {
        match self.mode {
            Mode::RetrievalOnly => self.k,
            Mode::TwoStage => self.m,
        }
    }

    pub fn model_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.mode {
            Mode::RetrievalOnly => format!("{} ({})", self.provider, self.index_kind),
            Mode::TwoStage => format!(
                "{} ({}) + {} [{}]",
                self.provider, self.index_kind, self.client, self.template_id
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub key: QueryKey,
    /// Top-m candidates; two_stage only.
    pub stage1: Option<RankedList>,
    pub final_list: RankedList,
    pub rerank: Option<RerankResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_queries: usize,
    pub n_indexes: usize,
    pub index_ms: u64,
    pub retrieval_ms: u64,
    pub rerank_ms: u64,
    /// Queries whose answer needed at least one repair.
    pub n_repaired: usize,
    pub repairs: BTreeMap<Repair, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRun {
    pub config: PipelineConfig,
    /// Sorted by key.
    pub results: Vec<QueryResult>,
    pub stats: RunStats,
}

impl MatchRun {
    pub fn final_lists(&self) -> BTreeMap<QueryKey, RankedList> {
        self.results
            .iter()
            .map(|r| (r.key.clone(), r.final_list.clone()))
            .collect()
    }

    /// Score final lists at `k` (the run's `k` when `None`) against the
    /// corpus annotations for the queries in this run.
    pub fn evaluate(&self, corpus: &Corpus, k: Option<usize>) -> Result<Evaluation> {
        let lists = self.final_lists();
        let gold = gold_for(corpus, lists.keys());
        Ok(evaluate_run(
            &lists,
            &gold,
            k.unwrap_or(self.config.k),
            &self.config.model_label(),
        )?)
    }
}

/// Gold sets for the given keys, empty sets included.
pub fn gold_for<'a>(
    corpus: &Corpus,
    keys: impl IntoIterator<Item = &'a QueryKey>,
) -> BTreeMap<QueryKey, BTreeSet<String>> {
    keys.into_iter()
        .map(|k| (k.clone(), corpus.gold(&k.requirement_id, k.report_id.as_deref())))
        .collect()
}

/// Every query with a non-empty gold set under `policy`.
pub fn judgments(corpus: &Corpus, policy: NamespacePolicy) -> BTreeMap<QueryKey, BTreeSet<String>> {
    let mut out = BTreeMap::new();
    for (req, _) in corpus.annotations().iter() {
        match policy {
            NamespacePolicy::Global => {
                let gold = corpus.gold(req, None);
                if !gold.is_empty() {
                    out.insert(QueryKey::global(req.clone()), gold);
                }
            }
            NamespacePolicy::PerReport => {
                for report in corpus.reports() {
                    let gold = corpus.gold(req, Some(&report.id));
                    if !gold.is_empty() {
                        out.insert(QueryKey::in_report(report.id.clone(), req.clone()), gold);
                    }
                }
            }
        }
    }
    out
}

/// The queries `config` selects, sorted.
pub fn plan_queries(corpus: &Corpus, config: &PipelineConfig) -> Result<Vec<QueryKey>> {
    for r in &config.reports {
        if !corpus.reports().iter().any(|rep| &rep.id == r) {
            return Err(PipelineError::UnknownReport(r.clone()));
        }
    }
    let wanted = |report: Option<&str>| {
        config.reports.is_empty() || report.is_some_and(|r| config.reports.iter().any(|x| x == r))
    };
    let keys: BTreeSet<QueryKey> = match config.query_scope {
        QueryScope::Annotated => judgments(corpus, config.namespace_policy)
            .into_keys()
            .filter(|k| config.namespace_policy == NamespacePolicy::Global || wanted(k.report_id.as_deref()))
            .collect(),
        QueryScope::All => match config.namespace_policy {
            NamespacePolicy::Global => corpus
                .requirements()
                .iter()
                .map(|r| QueryKey::global(r.id.clone()))
                .collect(),
            NamespacePolicy::PerReport => corpus
                .reports()
                .iter()
                .filter(|rep| wanted(Some(&rep.id)))
                .flat_map(|rep| {
                    corpus
                        .requirements()
                        .iter()
                        .map(|r| QueryKey::in_report(rep.id.clone(), r.id.clone()))
                })
                .collect(),
        },
    };
    Ok(keys.into_iter().collect())
}

enum BuiltIndex {
    Exact(ExactIndex),
    Clustered(ClusteredIndex, usize),
}

impl BuiltIndex {
    fn build(corpus: &Corpus, store: &EmbeddingStore, ns: Namespace, config: &PipelineConfig) -> Result<Self> {
        Ok(match config.index_kind {
            IndexKind::Exact => Self::Exact(build_exact_index(store, corpus.segments(), ns)?),
            IndexKind::Clustered => {
                let population = corpus.segments().iter().filter(|s| ns.contains(s)).count();
                let num_clusters = config.num_clusters.unwrap_or_else(|| default_num_clusters(population));
                let params = ClusteredParams {
                    num_clusters,
                    seed: config.seed,
                    max_iters: config.max_iters,
                };
                let (index, _) = build_clustered_index(store, corpus.segments(), ns, params)?;
                let n_probe = config.n_probe.unwrap_or_else(|| default_n_probe(index.num_clusters()));
                Self::Clustered(index, n_probe)
            }
        })
    }

    fn top_k(&self, query: &crate::embedding::Vector, k: usize) -> Result<RankedList> {
        Ok(match self {
            Self::Exact(i) => i.top_k(query, k)?,
            Self::Clustered(i, n_probe) => i.top_k(query, k, *n_probe)?,
        })
    }
}

fn namespace_of(key: &QueryKey) -> Namespace {
    match &key.report_id {
        Some(r) => Namespace::report(r.clone()),
        None => Namespace::All,
    }
}

fn check_embeddings(corpus: &Corpus, store: &EmbeddingStore, keys: &[QueryKey]) -> Result<()> {
    let namespaces: BTreeSet<Namespace> = keys.iter().map(namespace_of).collect();
    let mut missing: BTreeSet<String> = store
        .missing(keys.iter().map(|k| k.requirement_id.as_str()))
        .into_iter()
        .collect();
    missing.extend(
        store.missing(
            corpus
                .segments()
                .iter()
                .filter(|s| namespaces.iter().any(|ns| ns.contains(s)))
                .map(|s| s.id.as_str()),
        ),
    );
    if missing.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::MissingEmbeddings(missing.into_iter().collect()))
    }
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Run every query `config` selects.
///
/// `client` is required in two_stage mode and ignored otherwise.
pub fn run_match(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
    client: Option<&dyn ChatClient>,
) -> Result<MatchRun> {
    config.validate()?;
    let keys = plan_queries(corpus, config)?;
    run_queries(corpus, store, config, client, &keys)
}

/// Run an explicit list of queries. Results come back sorted by key.
pub fn run_queries(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
    client: Option<&dyn ChatClient>,
    keys: &[QueryKey],
) -> Result<MatchRun> {
    config.validate()?;
    let client = match (config.mode, client) {
        (Mode::TwoStage, None) => return Err(PipelineError::NoClient),
        (Mode::TwoStage, c) => c,
        (Mode::RetrievalOnly, _) => None,
    };
    let keys: Vec<QueryKey> = keys.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    for k in &keys {
        if corpus.requirement(&k.requirement_id).is_none() {
            return Err(PipelineError::InvalidConfig(format!(
                "unknown requirement \"{}\"",
                k.requirement_id
            )));
        }
        if let Some(r) = &k.report_id {
            if !corpus.reports().iter().any(|rep| &rep.id == r) {
                return Err(PipelineError::UnknownReport(r.clone()));
            }
        }
        let global = config.namespace_policy == NamespacePolicy::Global;
        if global != k.report_id.is_none() {
            return Err(PipelineError::InvalidConfig(format!(
                "query {k} does not match the namespace policy"
            )));
        }
    }
    check_embeddings(corpus, store, &keys)?;
    let mut stats = RunStats {
        n_queries: keys.len(),
        ..RunStats::default()
    };

    let t = Instant::now();
    let mut indexes: BTreeMap<Namespace, BuiltIndex> = BTreeMap::new();
    for ns in keys.iter().map(namespace_of) {
        if let std::collections::btree_map::Entry::Vacant(slot) = indexes.entry(ns) {
            let built = BuiltIndex::build(corpus, store, slot.key().clone(), config)?;
            slot.insert(built);
        }
    }
    stats.n_indexes = indexes.len();
    stats.index_ms = elapsed_ms(t);

    let t = Instant::now();
    let width = config.stage1_width();
    let mut stage1 = Vec::with_capacity(keys.len());
    for key in &keys {
        let query = store.get(&key.requirement_id).expect("checked above");
        let list = indexes[&namespace_of(key)].top_k(query, width)?;
        stage1.push(list.with_requirement(key.requirement_id.clone()));
    }
    stats.retrieval_ms = elapsed_ms(t);

    let results = match client {
        None => keys
            .into_iter()
            .zip(stage1)
            .map(|(key, list)| QueryResult {
                key,
                stage1: None,
                final_list: list,
                rerank: None,
            })
            .collect(),
        Some(client) => {
            let t = Instant::now();
            let template = PromptTemplate::builtin(config.template_id);
            let reranked = rerank_all(corpus, client, &template, config.k, &stage1)?;
            stats.rerank_ms = elapsed_ms(t);
            let mut results = Vec::with_capacity(keys.len());
            for ((key, list), rr) in keys.into_iter().zip(stage1).zip(reranked) {
                if !rr.repairs.is_empty() {
                    stats.n_repaired += 1;
                }
                for r in &rr.repairs {
                    *stats.repairs.entry(*r).or_default() += 1;
                }
                let entries = rr
                    .chosen
                    .iter()
                    .map(|id| RankedEntry {
                        segment_id: id.clone(),
                        score: list.score_of(id).expect("chosen ids are candidates"),
                    })
                    .collect();
                let final_list = RankedList::new(key.requirement_id.clone(), entries)?;
                results.push(QueryResult {
                    key,
                    stage1: Some(list),
                    final_list,
                    rerank: Some(rr),
                });
            }
            results
        }
    };
    Ok(MatchRun {
        config: config.clone(),
        results,
        stats,
    })
}

/// Re-rank every candidate list, at most `client.max_in_flight()` at a
/// time. Output order matches input order.
fn rerank_all(
    corpus: &Corpus,
    client: &dyn ChatClient,
    template: &PromptTemplate,
    k: usize,
    lists: &[RankedList],
) -> Result<Vec<RerankResult>> {
    let sets: Vec<Option<CandidateSet>> = lists
        .iter()
        .map(|list| {
            if list.is_empty() {
                return Ok(None);
            }
            let requirement = corpus
                .requirement(&list.requirement_id)
                .expect("checked by caller")
                .clone();
            let candidates = list
                .entries()
                .iter()
                .map(|e| {
                    let text = corpus.segment(&e.segment_id).map_or("", |s| s.text.as_str());
                    Candidate::new(e.segment_id.clone(), text)
                })
                .collect();
            CandidateSet::new(requirement, candidates).map(Some)
        })
        .collect::<Result<_, RerankError>>()?;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RerankResult, RerankError>>>> = sets.iter().map(|_| Mutex::new(None)).collect();
    let workers = client.max_in_flight().clamp(1, sets.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(set) = sets.get(i) else { break };
                let out = match set {
                    Some(cs) => rerank(client, template, cs, k),
                    None => Ok(RerankResult {
                        chosen: Vec::new(),
                        raw_response: String::new(),
                        explanation: None,
                        repairs: Vec::new(),
                    }),
                };
                let failed = out.is_err();
                *slots[i].lock().unwrap() = Some(out);
                if failed {
                    // Stop handing out work; earlier slots still finish.
                    next.fetch_add(sets.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(r) => out.push(r?),
            None => break,
        }
    }
    debug_assert_eq!(out.len(), lists.len());
    Ok(out)
}

/// A seeded uniform sample of `n` keys, returned sorted.
pub fn sample_queries(keys: &[QueryKey], n: usize, seed: u64) -> Result<Vec<QueryKey>> {
    if n > keys.len() {
        return Err(PipelineError::SampleTooLarge {
            requested: n,
            available: keys.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, keys.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| keys[i].clone()).collect())
}

/// Run the same sampled queries once per template and report each.
///
/// The sample is drawn from annotated queries selected by `base`
/// (ignoring its `query_scope`). Reports are labeled by template id.
pub fn run_prompt_study(
    corpus: &Corpus,
    store: &EmbeddingStore,
    base: &PipelineConfig,
    templates: &[TemplateId],
    sample_size: usize,
    seed: u64,
    client: &dyn ChatClient,
) -> Result<Vec<AggregateReport>> {
    let mut config = base.clone();
    config.mode = Mode::TwoStage;
    config.query_scope = QueryScope::Annotated;
    config.validate()?;
    let keys = plan_queries(corpus, &config)?;
    let sample = sample_queries(&keys, sample_size, seed)?;
    let mut reports = Vec::with_capacity(templates.len());
    for &t in templates {
        config.template_id = t;
        config.label = Some(t.to_string());
        let run = run_queries(corpus, store, &config, Some(client), &sample)?;
        reports.push(run.evaluate(corpus, None)?.report);
    }
    Ok(reports)
}
