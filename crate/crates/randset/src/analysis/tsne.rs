//! Exact (non-approximated) t-SNE for 2-D visualisation of embeddings.
//!
//! High-dimensional affinities use Gaussian kernels whose bandwidths are
//! binary-searched per point until the conditional entropy matches
//! `ln(perplexity)` to 1e-5 (at most 50 halvings); the conditionals are then
//! symmetrized, normalized by `2N`, and floored at 1e-12. The embedding is
//! optimized by momentum gradient descent on the KL divergence against
//! Student-t low-dimensional affinities, with early exaggeration. All
//! parallel reductions accumulate per-row partial sums in row order, so
//! results are independent of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;
use crate::scalar::Scalar;

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations that run with exaggerated affinities.
    pub exaggeration_iters: usize,
    pub momentum_start: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches to its final value.
    pub momentum_switch: usize,
    pub seed: u64,
}

impl TsneParams {
    pub fn new(seed: u64) -> Self {
        TsneParams {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 100.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_start: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n < 5 {
            return Err(Error::EmptyInput(format!(
                "t-SNE needs at least 5 points (got {n})"
            )));
        }
        if !(self.perplexity >= 1.0 && self.perplexity < n as f64 / 3.0) {
            return Err(Error::InvalidArgument(format!(
                "perplexity {} outside [1, n/3) for n = {n}",
                self.perplexity
            )));
        }
        if self.iterations < self.exaggeration_iters {
            return Err(Error::InvalidArgument(format!(
                "iterations {} below the {}-iteration exaggeration phase",
                self.iterations, self.exaggeration_iters
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return Err(Error::InvalidArgument(
                "learning_rate must be > 0 and early_exaggeration >= 1".into(),
            ));
        }
        for m in [self.momentum_start, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::InvalidArgument(format!("momentum {m} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult<S> {
    /// N x 2 embedding coordinates.
    pub coords: Matrix<S>,
    /// KL divergence of the initial random layout (unexaggerated affinities).
    pub initial_kl: f64,
    /// KL divergence of the final layout.
    pub final_kl: f64,
    /// Largest |H - ln(perplexity)| left after the bandwidth searches.
    pub max_entropy_error: f64,
}

/// Writes the conditional affinities of row `i` for precision `beta` into
/// `out` (normalized, zero at `i`) and returns their entropy in nats.
fn row_affinities(d2: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (j, &d) in d2.iter().enumerate() {
        let p = if j == i { 0.0 } else { (-beta * d).exp() };
        out[j] = p;
        sum += p;
    }
    if sum <= 0.0 {
        // All neighbours at (numerically) infinite distance: uniform fallback.
        let u = 1.0 / (d2.len() - 1) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == i { 0.0 } else { u };
        }
        return ((d2.len() - 1) as f64).ln();
    }
    let mut entropy = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= sum;
        if j != i && *o > 0.0 {
            entropy -= *o * o.ln();
        }
    }
    entropy
}

/// Symmetric, floored affinity matrix P and the worst entropy mismatch.
fn joint_affinities(data: &Matrix<f64>, perplexity: f64) -> (Matrix<f64>, f64) {
    let n = data.rows();
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = (0..n)
                .map(|j| Matrix::sq_dist_rows(data.row(i), data.row(j)))
                .collect();
            let mut p = vec![0.0; n];
            let mut beta = 1.0;
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut err = f64::INFINITY;
            for _ in 0..MAX_BISECTIONS {
                let entropy = row_affinities(&d2, i, beta, &mut p);
                err = entropy - target;
                if err.abs() < ENTROPY_TOL {
                    break;
                }
                if err > 0.0 {
                    // Entropy too high: sharpen (raise beta).
                    lo = beta;
                    beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = if lo.is_finite() { 0.5 * (beta + lo) } else { beta * 0.5 };
                }
            }
            (p, err.abs())
        })
        .collect();
    let max_err = rows.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let mut p = Matrix::zeros(n, n);
    for (i, (row, _)) in rows.iter().enumerate() {
        for j in 0..n {
            let sym = (row[j] + rows[j].0[i]) / (2.0 * n as f64);
            p.set(i, j, sym.max(P_FLOOR));
        }
    }
    for i in 0..n {
        p.set(i, i, P_FLOOR);
    }
    (p, max_err)
}

/// Student-t kernel matrix (1 + ||yi - yj||^2)^-1 with zero diagonal, and
/// its total sum (accumulated in row order).
fn student_kernel(y: &Matrix<f64>) -> (Matrix<f64>, f64) {
    let n = y.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        1.0 / (1.0 + Matrix::sq_dist_rows(y.row(i), y.row(j)))
                    }
                })
                .collect()
        })
        .collect();
    let mut num = Matrix::zeros(n, n);
    let mut total = 0.0;
    for (i, row) in rows.iter().enumerate() {
        total += row.iter().sum::<f64>();
        num.row_mut(i).copy_from_slice(row);
    }
    (num, total)
}

fn kl_divergence(p: &Matrix<f64>, num: &Matrix<f64>, num_total: f64) -> f64 {
    let n = p.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.get(i, j);
            let qij = (num.get(i, j) / num_total).max(P_FLOOR);
            kl += pij * (pij / qij).ln();
        }
    }
    kl
}

/// Runs exact t-SNE on the rows of `data`, producing 2-D coordinates.
pub fn run_tsne<S: Scalar>(data: &Matrix<S>, params: &TsneParams) -> Result<TsneResult<S>> {
    let n = data.rows();
    params.validate(n)?;
    if !data.is_finite() {
        return Err(Error::NonFinite("t-SNE input has NaN or Inf".into()));
    }
    // Work in f64 regardless of the input scalar.
    let mut x = Matrix::<f64>::zeros(n, data.cols());
    for i in 0..n {
        for (j, &v) in data.row(i).iter().enumerate() {
            x.set(i, j, v.to_f64());
        }
    }
    let (p, max_entropy_error) = joint_affinities(&x, params.perplexity);
    let mut rng = RngState::new(params.seed);
    let mut y = Matrix::<f64>::zeros(n, 2);
    for v in y.data_mut() {
        *v = 1e-4 * rng.next_gaussian::<f64>();
    }
    let (num0, tot0) = student_kernel(&y);
    let initial_kl = kl_divergence(&p, &num0, tot0);
    let mut velocity = Matrix::<f64>::zeros(n, 2);
    let mut final_kl = initial_kl;
    for iter in 0..params.iterations {
        let exag = if iter < params.exaggeration_iters {
            params.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < params.momentum_switch {
            params.momentum_start
        } else {
            params.momentum_final
        };
        let (num, num_total) = student_kernel(&y);
        // Gradient rows in parallel; the inner sums run in j order.
        let grads: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let yi = y.row(i);
                let mut g = [0.0f64; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let nij = num.get(i, j);
                    let pq = exag * p.get(i, j) - nij / num_total;
                    let w = 4.0 * pq * nij;
                    let yj = y.row(j);
                    g[0] += w * (yi[0] - yj[0]);
                    g[1] += w * (yi[1] - yj[1]);
                }
                g
            })
            .collect();
        for (i, g) in grads.iter().enumerate() {
            let v = velocity.row_mut(i);
            v[0] = momentum * v[0] - params.learning_rate * g[0];
            v[1] = momentum * v[1] - params.learning_rate * g[1];
        }
        for i in 0..n {
            let (vx, vy) = (velocity.get(i, 0), velocity.get(i, 1));
            let r = y.row_mut(i);
            r[0] += vx;
            r[1] += vy;
        }
        // Recenter.
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            cx += y.get(i, 0);
            cy += y.get(i, 1);
        }
        cx /= n as f64;
        cy /= n as f64;
        for i in 0..n {
            let r = y.row_mut(i);
            r[0] -= cx;
            r[1] -= cy;
        }
        if iter + 1 == params.iterations {
            let (numf, totf) = student_kernel(&y);
            final_kl = kl_divergence(&p, &numf, totf);
        }
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("t-SNE coordinates diverged".into()));
    }
    let mut coords = Matrix::<S>::zeros(n, 2);
    for i in 0..n {
        for j in 0..2 {
            coords.set(i, j, S::cast(y.get(i, j)));
        }
    }
    Ok(TsneResult { coords, initial_kl, final_kl, max_entropy_error })
}
