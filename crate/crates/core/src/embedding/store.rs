use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use super::{Vector, VectorError};
use crate::binfmt::{FormatError, Reader, Writer};

pub const STORE_FORMAT_VERSION: u32 = 1;
const STORE_MAGIC: &[u8; 4] = b"EMBS";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("dimension mismatch for \"{id}\": store has dim {expected}, vector has {found}")]
    DimMismatch { id: String, expected: usize, found: usize },
    #[error("duplicate entity id \"{0}\"")]
    DuplicateId(String),
    #[error("store dimension must be positive")]
    ZeroDim,
    #[error("corrupt store file: {0}")]
    Corrupt(#[from] FormatError),
    #[error("unsupported store format version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fixed-dimension vectors keyed by entity id.
///
/// Entries iterate in id order, which also fixes the on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    seed: u64,
    vectors: BTreeMap<String, Vector>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        Ok(Self {
            dim,
            seed: 0,
            vectors: BTreeMap::new(),
        })
    }

    /// Records the provider seed that produced the vectors (0 when unknown).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vector) -> Result<(), StoreError> {
        let id = id.into();
        if v.dim() != self.dim {
            return Err(StoreError::DimMismatch {
                id,
                expected: self.dim,
                found: v.dim(),
            });
        }
        if self.vectors.contains_key(&id) {
            return Err(StoreError::DuplicateId(id));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Vector> {
        self.vectors.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vector)> {
        self.vectors.iter()
    }

    /// Ids from `wanted` that have no vector.
    pub fn missing<'a, I>(&self, wanted: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a str>,
    {
        wanted
            .into_iter()
            .filter(|id| !self.vectors.contains_key(*id))
            .map(str::to_owned)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(STORE_MAGIC);
        w.u32(STORE_FORMAT_VERSION);
        w.u32(u32::try_from(self.dim).expect("dim fits u32"));
        w.u64(self.vectors.len() as u64);
        w.u64(self.seed);
        for (id, v) in &self.vectors {
            w.str(id);
            w.f64s(v.as_slice());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut r = Reader::open(bytes, STORE_MAGIC)?;
        let version = r.u32()?;
        if version != STORE_FORMAT_VERSION {
            return Err(StoreError::Version(version));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let seed = r.u64()?;
        let mut store = Self::new(dim)?.with_seed(seed);
        for _ in 0..count {
            let id = r.str()?;
            let values = r.f64s(dim)?;
            let v =
                Vector::new(values).map_err(|e: VectorError| FormatError::Invalid(format!("vector \"{id}\": {e}")))?;
            store.insert(id, v)?;
        }
        r.finish()?;
        Ok(store)
    }
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<(), StoreError> {
    fs::write(path, store.to_bytes())?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore, StoreError> {
    EmbeddingStore::from_bytes(&fs::read(path)?)
}
