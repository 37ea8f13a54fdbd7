//! K-Means with D²-weighted (K-Means++) seeding and Lloyd iterations.
//!
//! Determinism rules: every tie (nearest centroid, farthest point, best
//! restart) resolves to the lowest index; centroid sums run in row order;
//! restart `r` draws from the stream `derive_seed(seed, r)`, so running
//! restarts in parallel cannot change any result.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, RngState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub n_init: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansParams { k, n_init: 10, max_iters: 300, seed }
    }
}

/// Result of the best restart: one label per input row, final centroids,
/// the within-cluster sum of squared distances, and its per-Lloyd-iteration
/// history (non-increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<S> {
    pub labels: Vec<usize>,
    pub centroids: Matrix<S>,
    pub inertia: f64,
    pub inertia_history: Vec<f64>,
    pub n_iters: usize,
    pub restart: usize,
}

/// Index of the centroid nearest to `point` (lowest index on ties) and the
/// squared distance to it.
fn nearest_centroid<S: Scalar>(point: &[S], centroids: &Matrix<S>) -> (usize, S) {
    let mut best = 0usize;
    let mut best_d = Matrix::sq_dist_rows(point, centroids.row(0));
    for c in 1..centroids.rows() {
        let d = Matrix::sq_dist_rows(point, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// D²-weighted seeding: first centre uniform, every further centre sampled
/// with probability proportional to its squared distance to the nearest
/// centre chosen so far.
fn seed_centroids<S: Scalar>(data: &Matrix<S>, k: usize, rng: &mut RngState) -> Matrix<S> {
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    let first = rng.next_below(n as u64) as usize;
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| Matrix::sq_dist_rows(data.row(i), data.row(first)).to_f64())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All points coincide with chosen centres; fall back to uniform.
            rng.next_below(n as u64) as usize
        };
        centroids.row_mut(c).copy_from_slice(data.row(chosen));
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = Matrix::sq_dist_rows(data.row(i), data.row(chosen)).to_f64();
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

fn lloyd<S: Scalar>(
    data: &Matrix<S>,
    mut centroids: Matrix<S>,
    max_iters: usize,
) -> (Vec<usize>, Matrix<S>, f64, Vec<f64>, usize) {
    let n = data.rows();
    let k = centroids.rows();
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iters = 0;
    for _ in 0..max_iters {
        iters += 1;
        // Assignment step (parallel per point, deterministic).
        let assign: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (c, d) = nearest_centroid(data.row(i), &centroids);
                (c, d.to_f64())
            })
            .collect();
        let new_labels: Vec<usize> = assign.iter().map(|&(c, _)| c).collect();
        let mut dists: Vec<f64> = assign.iter().map(|&(_, d)| d).collect();
        // Empty clusters capture the point currently farthest from its
        // centroid (lowest index on ties), one per empty cluster.
        let mut counts = vec![0usize; k];
        for &l in &new_labels {
            counts[l] += 1;
        }
        let mut patched = new_labels.clone();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = dists
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("nonempty data");
            counts[patched[far]] -= 1;
            patched[far] = c;
            counts[c] = 1;
            dists[far] = 0.0;
        }
        let inertia: f64 = dists.iter().sum();
        history.push(inertia);
        // Update step: plain means in row order.
        let mut sums = Matrix::<S>::zeros(k, data.cols());
        for i in 0..n {
            let c = patched[i];
            for (acc, &v) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *acc += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Can only happen when the farthest-point patch drained a
                // singleton cluster; keep its previous centroid.
                sums.row_mut(c).copy_from_slice(centroids.row(c));
                continue;
            }
            let inv = S::one() / S::cast(counts[c] as f64);
            for v in sums.row_mut(c) {
                *v *= inv;
            }
        }
        let converged = patched == labels;
        labels = patched;
        centroids = sums;
        if converged {
            break;
        }
    }
    // Final inertia against the final centroids.
    let final_inertia: f64 = (0..n)
        .map(|i| Matrix::sq_dist_rows(data.row(i), centroids.row(labels[i])).to_f64())
        .sum();
    history.push(final_inertia);
    (labels, centroids, final_inertia, history, iters)
}

/// Clusters the rows of `data` into `params.k` groups, keeping the best of
/// `params.n_init` independent restarts (lowest inertia; lowest restart
/// index on exact ties).
pub fn kmeans_pp<S: Scalar>(data: &Matrix<S>, params: &KmeansParams) -> Result<ClusterAssignment<S>> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::EmptyInput("no rows to cluster".into()));
    }
    if params.k == 0 || params.k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {} outside 1..={n}",
            params.k
        )));
    }
    if params.n_init == 0 || params.max_iters == 0 {
        return Err(Error::InvalidArgument("n_init and max_iters must be >= 1".into()));
    }
    if !data.is_finite() {
        return Err(Error::NonFinite("clustering input has NaN or Inf".into()));
    }
    let runs: Vec<ClusterAssignment<S>> = (0..params.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngState::new(derive_seed(params.seed, r as u64));
            let init = seed_centroids(data, params.k, &mut rng);
            let (labels, centroids, inertia, history, iters) =
                lloyd(data, init, params.max_iters);
            ClusterAssignment {
                labels,
                centroids,
                inertia,
                inertia_history: history,
                n_iters: iters,
                restart: r,
            }
        })
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia).then(a.restart.cmp(&b.restart)))
        .expect("n_init >= 1"))
}
