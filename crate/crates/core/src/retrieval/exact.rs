use super::{namespace_members, select_top, Namespace, RankedEntry, RankedList, Result, RetrievalError};
use crate::corpus::Segment;
use crate::embedding::{cosine_to_score, cosine_with_norms, EmbeddingStore, Vector};

/// Brute-force index: every query scores every member.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactIndex {
    pub(super) namespace: Namespace,
    pub(super) dim: usize,
    pub(super) ids: Vec<String>,
    pub(super) vectors: Vec<Vector>,
    pub(super) norms: Vec<f64>,
}

pub fn build_exact_index(store: &EmbeddingStore, segments: &[Segment], namespace: Namespace) -> Result<ExactIndex> {
    let members = namespace_members(store, segments, &namespace)?;
    ExactIndex::from_entries(namespace, members)
}

impl ExactIndex {
    /// Build from explicit `(id, vector)` pairs. Ids must be unique.
    pub fn from_entries(namespace: Namespace, entries: Vec<(String, Vector)>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| RetrievalError::EmptyNamespace(namespace.clone()))?;
        let dim = first.1.dim();
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        let mut norms = Vec::with_capacity(entries.len());
        let mut seen = std::collections::HashSet::new();
        for (id, v) in entries {
            if v.dim() != dim {
                return Err(RetrievalError::DimMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            let n = v.norm();
            if n == 0.0 {
                return Err(RetrievalError::ZeroVector(id));
            }
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateId(id));
            }
            ids.push(id);
            vectors.push(v);
            norms.push(n);
        }
        Ok(Self {
            namespace,
            dim,
            ids,
            vectors,
            norms,
        })
    }

    pub fn namespace(&self) -> &Namespace {
        &self.namespace
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &Vector {
        &self.vectors[i]
    }

    /// The `min(k, len)` members most similar to `query`.
    pub fn top_k(&self, query: &Vector, k: usize) -> Result<RankedList> {
        let qn = check_query(query, self.dim, k)?;
        let entries = (0..self.len()).map(|i| self.score_member(i, query, qn)).collect();
        RankedList::new(String::new(), select_top(entries, k))
    }

    pub(super) fn score_member(&self, i: usize, query: &Vector, query_norm: f64) -> RankedEntry {
        let cos = cosine_with_norms(query.as_slice(), query_norm, self.vectors[i].as_slice(), self.norms[i]);
        RankedEntry {
            segment_id: self.ids[i].clone(),
            score: cosine_to_score(cos),
        }
    }
}

pub(super) fn check_query(query: &Vector, dim: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if query.dim() != dim {
        return Err(RetrievalError::DimMismatch {
            expected: dim,
            found: query.dim(),
        });
    }
    let n = query.norm();
    if n == 0.0 {
        return Err(RetrievalError::ZeroQuery);
    }
    Ok(n)
}
