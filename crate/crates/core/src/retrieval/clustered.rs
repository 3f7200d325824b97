use super::exact::check_query;
use super::kmeans::{lloyd, KMeansOutcome, KMeansParams};
use super::{namespace_members, select_top, ExactIndex, Namespace, RankedList, Result, RetrievalError};
use crate::corpus::Segment;
use crate::embedding::{cosine_with_norms, norm, EmbeddingStore, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusteredParams {
    pub num_clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl ClusteredParams {
    /// `ceil(sqrt(n))` clusters, 100 iterations.
    pub fn for_population(n: usize, seed: u64) -> Self {
        Self {
            num_clusters: default_num_clusters(n),
            seed,
            max_iters: 100,
        }
    }
}

pub fn default_num_clusters(population: usize) -> usize {
    ((population as f64).sqrt().ceil() as usize).max(1)
}

pub fn default_n_probe(num_clusters: usize) -> usize {
    num_clusters.div_ceil(4).max(1)
}

/// Inverted-file index: members partitioned by k-means, probed by centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredIndex {
    pub(super) members: ExactIndex,
    pub(super) seed: u64,
    pub(super) centroids: Vec<Vec<f64>>,
    pub(super) centroid_norms: Vec<f64>,
    pub(super) assignment: Vec<u32>,
    pub(super) lists: Vec<Vec<usize>>,
}

pub fn build_clustered_index(
    store: &EmbeddingStore,
    segments: &[Segment],
    namespace: Namespace,
    params: ClusteredParams,
) -> Result<(ClusteredIndex, KMeansOutcome)> {
    let members = namespace_members(store, segments, &namespace)?;
    ClusteredIndex::from_entries(namespace, members, params)
}

impl ClusteredIndex {
    pub fn from_entries(
        namespace: Namespace,
        entries: Vec<(String, Vector)>,
        params: ClusteredParams,
    ) -> Result<(Self, KMeansOutcome)> {
        if params.num_clusters == 0 || params.max_iters == 0 {
            return Err(RetrievalError::ZeroClusters);
        }
        let members = ExactIndex::from_entries(namespace, entries)?;
        if params.num_clusters > members.len() {
            return Err(RetrievalError::TooManyClusters {
                requested: params.num_clusters,
                population: members.len(),
            });
        }
        let points: Vec<&[f64]> = members.vectors.iter().map(Vector::as_slice).collect();
        let outcome = lloyd(
            &points,
            KMeansParams {
                num_clusters: params.num_clusters,
                seed: params.seed,
                max_iters: params.max_iters,
            },
        );
        let assignment = outcome.assignment.iter().map(|&c| c as u32).collect();
        let index = Self::from_parts(members, params.seed, outcome.centroids.clone(), assignment)?;
        Ok((index, outcome))
    }

    pub(super) fn from_parts(
        members: ExactIndex,
        seed: u64,
        centroids: Vec<Vec<f64>>,
        assignment: Vec<u32>,
    ) -> Result<Self> {
        let mut lists = vec![Vec::new(); centroids.len()];
        for (i, &c) in assignment.iter().enumerate() {
            let list = lists.get_mut(c as usize).ok_or_else(|| {
                RetrievalError::Corrupt(crate::FormatError::Invalid(format!(
                    "assignment {c} out of range for {} clusters",
                    centroids.len()
                )))
            })?;
            list.push(i);
        }
        let centroid_norms = centroids.iter().map(|c| norm(c)).collect();
        Ok(Self {
            members,
            seed,
            centroids,
            centroid_norms,
            assignment,
            lists,
        })
    }

    pub fn namespace(&self) -> &Namespace {
        self.members.namespace()
    }

    pub fn dim(&self) -> usize {
        self.members.dim()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ids(&self) -> &[String] {
        self.members.ids()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Cluster index of each member, aligned with [`ids`](Self::ids).
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Member positions of each cluster.
    pub fn cluster_members(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// Clusters ordered by centroid cosine to the query, best first.
    /// Zero-norm centroids sort last.
    fn probe_order(&self, query: &Vector, query_norm: f64) -> Vec<usize> {
        let sims: Vec<f64> = self
            .centroids
            .iter()
            .zip(&self.centroid_norms)
            .map(|(c, &cn)| {
                if cn == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    cosine_with_norms(query.as_slice(), query_norm, c, cn)
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..self.centroids.len()).collect();
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        order
    }

    /// Score the members of the `n_probe` best clusters and keep the top `k`.
    pub fn top_k(&self, query: &Vector, k: usize, n_probe: usize) -> Result<RankedList> {
        let qn = check_query(query, self.dim(), k)?;
        if n_probe == 0 || n_probe > self.num_clusters() {
            return Err(RetrievalError::BadProbe {
                n_probe,
                num_clusters: self.num_clusters(),
            });
        }
        let entries = self
            .probe_order(query, qn)
            .into_iter()
            .take(n_probe)
            .flat_map(|c| self.lists[c].iter().copied())
            .map(|i| self.members.score_member(i, query, qn))
            .collect();
        RankedList::new(String::new(), select_top(entries, k))
    }
}
