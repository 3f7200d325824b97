//! Synthetic corpora with planted structure, for tests, benches and demos.
//!
//! Every requirement gets a random unit "topic" direction. A segment is
//! either background noise or belongs to one requirement's topic, in which
//! case it is gold for that requirement and its vector is the topic plus
//! Gaussian noise. Requirement vectors are the bare topics, so retrieval
//! quality is controlled by the noise level.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{AnnotationSet, Corpus, Requirement, Segment};
use crate::embedding::{EmbeddingStore, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub segments_per_report: Vec<usize>,
    pub requirements: usize,
    pub dim: usize,
    /// Probability that a segment belongs to some requirement's topic.
    pub topical_fraction: f64,
    /// Cap on gold segments per (report, requirement).
    pub max_gold_per_report: usize,
    /// Standard deviation of per-coordinate noise on topical segments.
    pub noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Desk-scale default: 10 reports x 20 segments, 20 requirements.
    pub fn small(seed: u64) -> Self {
        Self {
            segments_per_report: vec![20; 10],
            requirements: 20,
            dim: 32,
            topical_fraction: 0.7,
            max_gold_per_report: 5,
            noise: 0.7,
            seed,
        }
    }

    /// 7097 segments over 10 reports and a 1214-item catalog.
    pub fn full_scale(seed: u64) -> Self {
        let mut segments_per_report = vec![710; 7];
        segments_per_report.extend([709; 3]);
        Self {
            segments_per_report,
            requirements: 1214,
            dim: 64,
            topical_fraction: 0.8,
            max_gold_per_report: 5,
            noise: 0.35,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub store: EmbeddingStore,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vector {
    let n = crate::embedding::norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    Vector::new(v).expect("finite")
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    assert!(cfg.dim > 0 && cfg.requirements > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = EmbeddingStore::new(cfg.dim).unwrap().with_seed(cfg.seed);

    let topics: Vec<Vec<f64>> = (0..cfg.requirements)
        .map(|_| unit(gaussian(&mut rng, cfg.dim)).into_inner())
        .collect();
    let req_width = cfg.requirements.to_string().len();
    let requirements: Vec<Requirement> = (0..cfg.requirements)
        .map(|j| {
            let id = format!("req-{j:0req_width$}");
            store
                .insert(id.clone(), Vector::new(topics[j].clone()).unwrap())
                .unwrap();
            Requirement {
                id,
                standard_ref: format!("IAS {}.{}", 1 + j % 41, 1 + j / 41),
                text: format!("Disclose the information required for topic {j}."),
            }
        })
        .collect();

    let mut segments = Vec::new();
    let mut links: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (r, &n_segs) in cfg.segments_per_report.iter().enumerate() {
        let report_id = format!("report-{r:02}");
        let mut per_req = vec![0usize; cfg.requirements];
        let seg_width = n_segs.to_string().len();
        for p in 0..n_segs {
            let id = format!("{report_id}-s{p:0seg_width$}");
            let topic = rng
                .random_bool(cfg.topical_fraction)
                .then(|| rng.random_range(0..cfg.requirements));
            let topic = topic.filter(|&j| per_req[j] < cfg.max_gold_per_report);
            let (vector, text) = match topic {
                Some(j) => {
                    per_req[j] += 1;
                    links.entry(requirements[j].id.clone()).or_default().insert(id.clone());
                    let noise = gaussian(&mut rng, cfg.dim);
                    let v = topics[j].iter().zip(noise).map(|(t, e)| t + cfg.noise * e).collect();
                    (unit(v), format!("Paragraph {p} of {report_id} discusses topic {j}."))
                }
                None => (
                    unit(gaussian(&mut rng, cfg.dim)),
                    format!("Paragraph {p} of {report_id} contains general remarks."),
                ),
            };
            store.insert(id.clone(), vector).unwrap();
            segments.push(Segment {
                id,
                report_id: report_id.clone(),
                position: p as u64,
                text,
            });
        }
    }
    let corpus = Corpus::new(segments, requirements, AnnotationSet::new(links)).expect("generated ids are unique");
    SynthCorpus { corpus, store }
}

/// One report whose segments sit at known cosine ranks for every
/// requirement query.
///
/// All requirements share the query direction `e0`; the segment at rank
/// `i` (1-based) makes angle `0.05 * i` radians with it, so scores are
/// strictly decreasing in rank. `gold_ranks[j]` lists the gold ranks for
/// requirement `j`.
pub fn ranked_fixture(n_segments: usize, gold_ranks: &[Vec<usize>]) -> SynthCorpus {
    let mut store = EmbeddingStore::new(2).unwrap();
    let report_id = "report-fixture".to_string();
    // Segment ids deliberately do not sort in rank order.
    let seg_id = |rank: usize| format!("seg-{:02}", (rank * 7) % 97);
    let mut segments = Vec::new();
    for rank in 1..=n_segments {
        let theta = 0.05 * rank as f64;
        store
            .insert(seg_id(rank), Vector::new(vec![theta.cos(), theta.sin()]).unwrap())
            .unwrap();
        segments.push(Segment {
            id: seg_id(rank),
            report_id: report_id.clone(),
            position: rank as u64,
            text: format!("Segment at rank {rank}."),
        });
    }
    let mut requirements = Vec::new();
    let mut links = BTreeMap::new();
    for (j, ranks) in gold_ranks.iter().enumerate() {
        let id = format!("req-{j:02}");
        store.insert(id.clone(), Vector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        links.insert(id.clone(), ranks.iter().map(|&r| seg_id(r)).collect());
        requirements.push(Requirement {
            id,
            standard_ref: String::new(),
            text: format!("Requirement {j}."),
        });
    }
    let corpus = Corpus::new(segments, requirements, AnnotationSet::new(links)).unwrap();
    SynthCorpus { corpus, store }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_consistent() {
        let a = generate(&SynthConfig::small(3));
        let b = generate(&SynthConfig::small(3));
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.store, b.store);
        assert_eq!(a.corpus.segments().len(), 200);
        assert_eq!(a.store.len(), 220);
        for (req, gold) in a.corpus.annotations().iter() {
            assert!(a.corpus.requirement(req).is_some());
            for report in a.corpus.reports() {
                assert!(a.corpus.gold(req, Some(&report.id)).len() <= 5);
            }
            assert!(!gold.is_empty());
        }
    }

    #[test]
    fn full_scale_counts() {
        let cfg = SynthConfig::full_scale(0);
        assert_eq!(cfg.segments_per_report.iter().sum::<usize>(), 7097);
        assert_eq!(cfg.segments_per_report.len(), 10);
        assert_eq!(cfg.requirements, 1214);
    }

    #[test]
    fn ranked_fixture_ranks() {
        let fx = ranked_fixture(20, &[vec![6, 9]]);
        let idx =
            crate::retrieval::build_exact_index(&fx.store, fx.corpus.segments(), crate::retrieval::Namespace::All)
                .unwrap();
        let top = idx.top_k(fx.store.get("req-00").unwrap(), 20).unwrap();
        let ids = top.ids();
        let gold = fx.corpus.gold("req-00", None);
        assert!(gold.contains(&ids[5]) && gold.contains(&ids[8]));
    }
}
