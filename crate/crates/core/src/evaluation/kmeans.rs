//! Lloyd's algorithm with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::EvalError;
use crate::tensor::Tensor;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iterations: usize,
    /// Independent seedings; the lowest-inertia run is kept.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iterations: MAX_ITERATIONS, restarts: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Tensor,
    pub inertia: f64,
    /// Inertia after each assignment step of the kept run.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &Tensor) -> (usize, f64) {
    (0..centroids.rows())
        .map(|c| (c, sq_dist(point, centroids.row(c))))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus(x: &Tensor, k: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // Round-off can leave `u` past the last positive weight.
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // Every point coincides with a centre: take any unused index.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

fn assign(x: &Tensor, centroids: &Tensor) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = (0..x.rows())
        .map(|i| {
            let (c, d) = nearest(x.row(i), centroids);
            inertia += d;
            c
        })
        .collect();
    (labels, inertia)
}

/// Cluster means; an empty cluster takes the point farthest from its own
/// centroid, each such point used at most once.
fn update(x: &Tensor, labels: &[usize], old: &Tensor) -> Tensor {
    let (n, p) = x.shape();
    let k = old.rows();
    let mut sums = Tensor::zeros(k, p);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    let mut taken = vec![false; n];
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
            continue;
        }
        let far = (0..n)
            .filter(|&i| !taken[i])
            .map(|i| (i, sq_dist(x.row(i), old.row(labels[i]))))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        taken[far] = true;
        sums.row_mut(c).copy_from_slice(x.row(far));
    }
    sums
}

fn lloyd(x: &Tensor, mut centroids: Tensor, max_iterations: usize) -> KMeansResult {
    let mut history = Vec::new();
    let mut labels: Option<Vec<usize>> = None;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let (next, inertia) = assign(x, &centroids);
        history.push(inertia);
        if labels.as_ref() == Some(&next) {
            break;
        }
        centroids = update(x, &next, &centroids);
        labels = Some(next);
    }
    let assignments = labels.unwrap_or_else(|| assign(x, &centroids).0);
    let inertia = (0..x.rows()).map(|i| sq_dist(x.row(i), centroids.row(assignments[i]))).sum();
    KMeansResult { assignments, centroids, inertia, history, iterations }
}

pub fn kmeans(x: &Tensor, k: usize, seed: u64) -> Result<KMeansResult, EvalError> {
    kmeans_with(x, k, seed, KMeansOptions::default())
}

pub fn kmeans_with(x: &Tensor, k: usize, seed: u64, options: KMeansOptions) -> Result<KMeansResult, EvalError> {
    let n = x.rows();
    if k == 0 {
        return Err(EvalError::Invalid("k must be positive".into()));
    }
    if k > n {
        return Err(EvalError::Invalid(format!("k = {k} exceeds {n} points")));
    }
    if !x.is_finite() {
        return Err(EvalError::NonFinite("kmeans"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..options.restarts.max(1) {
        let run = lloyd(x, plus_plus(x, k, &mut rng), options.max_iterations.max(1));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
