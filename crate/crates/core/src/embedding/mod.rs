//! Dense vectors, pooling, cosine similarity and embedding providers.

mod provider;
mod store;

pub use provider::{
    embed_corpus, embed_corpus_with, EmbedItem, EmbedOptions, EmbeddingProvider, FileProvider, HashProvider,
    ProviderError, RemoteProvider, RemoteProviderConfig,
};
pub use store::{load_store, save_store, EmbeddingStore, StoreError, STORE_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VectorError {
    #[error("vector must have at least one dimension")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("mean pooling needs at least one token row")]
    NoRows,
    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
}

/// A finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        Vector::new(values).map_err(serde::de::Error::custom)
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine from precomputed norms. Both norms must be non-zero.
pub(crate) fn cosine_with_norms(a: &[f64], a_norm: f64, b: &[f64], b_norm: f64) -> f64 {
    (dot(a, b) / (a_norm * b_norm)).clamp(-1.0, 1.0)
}

/// Map a cosine in [-1, 1] onto [0, 1]; strictly increasing.
pub fn cosine_to_score(cos: f64) -> f64 {
    (1.0 + cos) / 2.0
}

/// Column means of a `T x D` token matrix.
///
/// Uses a running mean, so `T` identical rows pool to that row bit-for-bit.
pub fn mean_pool<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vector, VectorError> {
    let first = rows.first().ok_or(VectorError::NoRows)?.as_ref();
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(VectorError::Ragged {
                row: i,
                expected: dim,
                found: row.len(),
            });
        }
        let n = (i + 1) as f64;
        for (m, v) in mean.iter_mut().zip(row) {
            *m += (v - *m) / n;
        }
    }
    Vector::new(mean)
}

/// `<a,b> / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64, VectorError> {
    if a.dim() != b.dim() {
        return Err(VectorError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok(cosine_with_norms(a.as_slice(), na, b.as_slice(), nb))
}

/// Cosine similarity rescaled to [0, 1] as `(1 + cos) / 2`.
pub fn normalized_score(a: &Vector, b: &Vector) -> Result<f64, VectorError> {
    cosine_similarity(a, b).map(cosine_to_score)
}
