//! Top-K cosine retrieval over report namespaces.
//!
//! [`ExactIndex`] scores every member; [`ClusteredIndex`] partitions the
//! members with k-means and scores only the clusters whose centroids lie
//! closest to the query. Both produce a [`RankedList`] with the same
//! ordering rule: score descending, then segment id ascending.

mod clustered;
mod exact;
pub mod kmeans;
mod persist;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

pub use clustered::{build_clustered_index, default_n_probe, default_num_clusters, ClusteredIndex, ClusteredParams};
pub use exact::{build_exact_index, ExactIndex};
pub use persist::{load_index, save_index, Index, INDEX_FORMAT_VERSION};

use crate::binfmt::FormatError;
use crate::corpus::Segment;
use crate::embedding::{EmbeddingStore, Vector};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("namespace {0} contains no segments")]
    EmptyNamespace(Namespace),
    #[error("unknown report \"{0}\"")]
    UnknownReport(String),
    #[error("no embedding for ids: {}", .0.join(", "))]
    MissingVectors(Vec<String>),
    #[error("vector for \"{0}\" has zero norm")]
    ZeroVector(String),
    #[error("query has zero norm")]
    ZeroQuery,
    #[error("query dim {found} does not match index dim {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("cannot build {requested} clusters from {population} vectors")]
    TooManyClusters { requested: usize, population: usize },
    #[error("num_clusters and max_iters must be at least 1")]
    ZeroClusters,
    #[error("n_probe must be in 1..={num_clusters}, got {n_probe}")]
    BadProbe { n_probe: usize, num_clusters: usize },
    #[error("duplicate id \"{0}\" in ranked list")]
    DuplicateId(String),
    #[error("corrupt index file: {0}")]
    Corrupt(#[from] FormatError),
    #[error("unsupported index format version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

/// Which segments an index covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    All,
    Report(String),
}

impl Namespace {
    pub fn report(id: impl Into<String>) -> Self {
        Self::Report(id.into())
    }

    pub fn contains(&self, segment: &Segment) -> bool {
        match self {
            Self::All => true,
            Self::Report(r) => &segment.report_id == r,
        }
    }

    pub fn report_id(&self) -> Option<&str> {
        match self {
            Self::All => None,
            Self::Report(r) => Some(r),
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => f.write_str("all"),
            Self::Report(r) => write!(f, "report \"{r}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub segment_id: String,
    /// Normalized cosine score in [0, 1].
    pub score: f64,
}

/// Ordered recommendations for one requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub requirement_id: String,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Segment ids must be unique. Score order is not enforced here: a
    /// re-ranked list keeps its stage-one scores in the re-ranker's order.
    pub fn new(requirement_id: impl Into<String>, entries: Vec<RankedEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.segment_id.as_str()) {
                return Err(RetrievalError::DuplicateId(e.segment_id.clone()));
            }
        }
        Ok(Self {
            requirement_id: requirement_id.into(),
            entries,
        })
    }

    pub fn with_requirement(mut self, requirement_id: impl Into<String>) -> Self {
        self.requirement_id = requirement_id.into();
        self
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.segment_id.clone()).collect()
    }

    pub fn score_of(&self, segment_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.segment_id == segment_id)
            .map(|e| e.score)
    }

    /// The first `k` entries.
    pub fn prefix(&self, k: usize) -> RankedList {
        Self {
            requirement_id: self.requirement_id.clone(),
            entries: self.entries.iter().take(k).cloned().collect(),
        }
    }

    /// True when scores are non-increasing and ties are in id order.
    pub fn is_canonically_sorted(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater)
    }
}

fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.segment_id.cmp(&b.segment_id))
}

/// Keep the best `k` entries in canonical order.
pub(crate) fn select_top(mut entries: Vec<RankedEntry>, k: usize) -> Vec<RankedEntry> {
    if k < entries.len() {
        entries.select_nth_unstable_by(k - 1, rank_order);
        entries.truncate(k);
    }
    entries.sort_unstable_by(rank_order);
    entries
}

/// Members of `namespace` with their vectors, in id order.
pub(crate) fn namespace_members(
    store: &EmbeddingStore,
    segments: &[Segment],
    namespace: &Namespace,
) -> Result<Vec<(String, Vector)>> {
    if let Namespace::Report(r) = namespace {
        if !segments.iter().any(|s| &s.report_id == r) {
            return Err(RetrievalError::UnknownReport(r.clone()));
        }
    }
    let mut ids: Vec<&str> = segments
        .iter()
        .filter(|s| namespace.contains(s))
        .map(|s| s.id.as_str())
        .collect();
    if ids.is_empty() {
        return Err(RetrievalError::EmptyNamespace(namespace.clone()));
    }
    ids.sort_unstable();
    let missing = store.missing(ids.iter().copied());
    if !missing.is_empty() {
        return Err(RetrievalError::MissingVectors(missing));
    }
    Ok(ids
        .into_iter()
        .map(|id| (id.to_owned(), store.get(id).unwrap().clone()))
        .collect())
}
