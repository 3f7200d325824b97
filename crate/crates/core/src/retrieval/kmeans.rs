//! Lloyd's k-means with seeded initialization.
//!
//! Initial centroids are `k` distinct points drawn with a ChaCha8 generator.
//! Each iteration assigns every point to its nearest centroid (squared
//! Euclidean distance, ties to the lower cluster index), re-seeds empty
//! clusters, then moves each centroid to the mean of its members. The loop
//! stops when assignments stop changing or after `max_iters` iterations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub num_clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned centroid after each update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the initial centroids for `n` points.
pub fn initial_indices(n: usize, num_clusters: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, n, num_clusters).into_vec()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn objective(points: &[&[f64]], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

fn assign(points: &[&[f64]], centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, centroids)).collect();
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return assignment;
        };
        // Move the point farthest from its own centroid into the empty
        // cluster. Only donors with more than one member qualify, so no new
        // empty cluster appears.
        let mut donor = None;
        let mut donor_d = -1.0;
        for (i, (p, &c)) in points.iter().zip(&assignment).enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[c]);
            if d > donor_d {
                donor = Some(i);
                donor_d = d;
            }
        }
        let donor = donor.expect("k <= n guarantees a cluster with two members");
        assignment[donor] = empty;
        centroids[empty] = points[donor].to_vec();
    }
}

fn update(points: &[&[f64]], assignment: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for ((centroid, sum), n) in centroids.iter_mut().zip(sums).zip(counts) {
        let n = n as f64;
        *centroid = sum.into_iter().map(|s| s / n).collect();
    }
}

/// Run Lloyd's algorithm. Requires `1 <= num_clusters <= points.len()`,
/// `max_iters >= 1` and equal-length points.
pub fn lloyd(points: &[&[f64]], params: KMeansParams) -> KMeansOutcome {
    let n = points.len();
    assert!(params.num_clusters >= 1 && params.num_clusters <= n);
    assert!(params.max_iters >= 1);

    let mut centroids: Vec<Vec<f64>> = initial_indices(n, params.num_clusters, params.seed)
        .into_iter()
        .map(|i| points[i].to_vec())
        .collect();

    let mut assignment = assign(points, &mut centroids);
    update(points, &assignment, &mut centroids);
    let mut history = vec![objective(points, &centroids, &assignment)];
    let mut iterations = 1;
    let mut converged = false;

    while iterations < params.max_iters {
        let next = assign(points, &mut centroids);
        update(points, &next, &mut centroids);
        history.push(objective(points, &centroids, &next));
        iterations += 1;
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }

    KMeansOutcome {
        centroids,
        assignment,
        objective_history: history,
        iterations,
        converged,
    }
}
