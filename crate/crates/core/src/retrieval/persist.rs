//! Index file layout (all integers little-endian):
//!
//! ```text
//! "RIDX" | version u32 | kind u8 (0 exact, 1 clustered) | namespace str
//! | dim u32 | count u64 | num_clusters u32 | seed u64
//! | count x (id str, dim x f64)
//! | clustered only: num_clusters x dim x f64 centroids, count x u32 assignment
//! | crc32 of everything above
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8. The `all` namespace is
//! written as the empty string.

use std::fs;
use std::path::Path;

use super::{ClusteredIndex, ExactIndex, Namespace, Result, RetrievalError};
use crate::binfmt::{FormatError, Reader, Writer};
use crate::embedding::Vector;

pub const INDEX_FORMAT_VERSION: u32 = 1;
const INDEX_MAGIC: &[u8; 4] = b"RIDX";

#[derive(Debug, Clone, PartialEq)]
pub enum Index {
    Exact(ExactIndex),
    Clustered(ClusteredIndex),
}

impl Index {
    pub fn namespace(&self) -> &Namespace {
        match self {
            Self::Exact(i) => i.namespace(),
            Self::Clustered(i) => i.namespace(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Exact(i) => i.len(),
            Self::Clustered(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (members, kind, num_clusters, seed) = match self {
            Self::Exact(i) => (i, 0u8, 0u32, 0u64),
            Self::Clustered(c) => (&c.members, 1, c.num_clusters() as u32, c.seed),
        };
        let mut w = Writer::new(INDEX_MAGIC);
        w.u32(INDEX_FORMAT_VERSION);
        w.u8(kind);
        w.str(members.namespace.report_id().unwrap_or(""));
        w.u32(members.dim as u32);
        w.u64(members.len() as u64);
        w.u32(num_clusters);
        w.u64(seed);
        for (id, v) in members.ids.iter().zip(&members.vectors) {
            w.str(id);
            w.f64s(v.as_slice());
        }
        if let Self::Clustered(c) = self {
            for centroid in &c.centroids {
                w.f64s(centroid);
            }
            for &a in &c.assignment {
                w.u32(a);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, INDEX_MAGIC)?;
        let version = r.u32()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::Version(version));
        }
        let kind = r.u8()?;
        let namespace = match r.str()? {
            s if s.is_empty() => Namespace::All,
            s => Namespace::Report(s),
        };
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let num_clusters = r.u32()? as usize;
        let seed = r.u64()?;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = r.str()?;
            let v = Vector::new(r.f64s(dim)?).map_err(|e| FormatError::Invalid(format!("vector \"{id}\": {e}")))?;
            entries.push((id, v));
        }
        let members = ExactIndex::from_entries(namespace, entries)?;
        let index = match kind {
            0 => Self::Exact(members),
            1 => {
                let centroids = (0..num_clusters)
                    .map(|_| r.f64s(dim))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let assignment = (0..count)
                    .map(|_| r.u32())
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Self::Clustered(ClusteredIndex::from_parts(members, seed, centroids, assignment)?)
            }
            k => return Err(FormatError::Invalid(format!("unknown index kind {k}")).into()),
        };
        r.finish()?;
        Ok(index)
    }
}

pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    fs::write(path, index.to_bytes())?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Index> {
    Index::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::ClusteredParams;
    use rand::{Rng, SeedableRng};

    fn entries(n: usize, dim: usize) -> Vec<(String, Vector)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(n as u64);
        (0..n)
            .map(|i| {
                let v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("seg-{i}"), Vector::new(v).unwrap())
            })
            .collect()
    }

    #[test]
    fn clustered_round_trip_and_query() {
        let e = entries(40, 5);
        let (c, _) = ClusteredIndex::from_entries(
            Namespace::report("R1"),
            e.clone(),
            ClusteredParams {
                num_clusters: 6,
                seed: 7,
                max_iters: 100,
            },
        )
        .unwrap();
        let idx = Index::Clustered(c.clone());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ridx");
        save_index(&idx, &p).unwrap();
        let back = load_index(&p).unwrap();
        assert_eq!(back, idx);
        let Index::Clustered(b) = back else { panic!() };
        assert_eq!(b.assignment(), c.assignment());
        assert_eq!(b.centroids(), c.centroids());
        for (_, q) in e.iter().take(5) {
            assert_eq!(b.top_k(q, 10, 2).unwrap(), c.top_k(q, 10, 2).unwrap());
        }
    }

    #[test]
    fn exact_round_trip_and_query() {
        let e = entries(12, 3);
        let x = ExactIndex::from_entries(Namespace::All, e.clone()).unwrap();
        let back = Index::from_bytes(&Index::Exact(x.clone()).to_bytes()).unwrap();
        let Index::Exact(b) = back else { panic!() };
        assert_eq!(b.namespace(), &Namespace::All);
        assert_eq!(b.top_k(&e[3].1, 4).unwrap(), x.top_k(&e[3].1, 4).unwrap());
    }

    #[test]
    fn wrong_magic_rejected() {
        let x = ExactIndex::from_entries(Namespace::All, entries(3, 2)).unwrap();
        let mut bytes = Index::Exact(x).to_bytes();
        bytes[..4].copy_from_slice(b"EMBS");
        assert!(matches!(
            Index::from_bytes(&bytes),
            Err(RetrievalError::Corrupt(FormatError::BadMagic { .. }))
        ));
    }
}
