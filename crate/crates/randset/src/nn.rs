//! Dense neural-net kernels: weight initialization, shared per-point linear
//! layers, activations, set max-pooling, the four normalization modes, and
//! softmax cross-entropy.
//!
//! Everything here is a pure function; normalization layers carry no
//! learnable parameters (the encoders that use them are never trained — the
//! probes own their separate, trainable BatchNorm in [`crate::probes`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;
use crate::scalar::Scalar;

/// Epsilon added to variances before the square root in every normalization.
pub const DEFAULT_NORM_EPS: f64 = 1e-5;

/// Normalization applied inside encoder blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Per channel over all rows of the mini-batch (batch × points).
    Batch,
    /// Per cloud, per channel, over that cloud's points.
    Instance,
    /// Per point (row), over channels.
    Layer,
    /// Identity.
    None,
}

impl NormKind {
    /// Short code used in configs, file names, and report rows.
    pub fn code(self) -> &'static str {
        match self {
            NormKind::Batch => "bn",
            NormKind::Instance => "in",
            NormKind::Layer => "ln",
            NormKind::None => "nn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bn" | "batch" => Ok(NormKind::Batch),
            "in" | "instance" => Ok(NormKind::Instance),
            "ln" | "layer" => Ok(NormKind::Layer),
            "nn" | "none" => Ok(NormKind::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown normalization '{other}' (expected bn|in|ln|nn)"
            ))),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Weight-initialization families. Glorot is the default everywhere; the
/// alternatives exist as configuration surface only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Uniform on ±sqrt(6/(fan_in+fan_out)).
    Glorot,
    /// Uniform on ±sqrt(6/fan_in).
    He,
    /// Uniform on ±0.05.
    Uniform,
    /// Gaussian with standard deviation 0.05.
    Normal,
}

impl InitKind {
    pub fn code(self) -> &'static str {
        match self {
            InitKind::Glorot => "glorot",
            InitKind::He => "he",
            InitKind::Uniform => "uniform",
            InitKind::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glorot" | "xavier" => Ok(InitKind::Glorot),
            "he" => Ok(InitKind::He),
            "uniform" => Ok(InitKind::Uniform),
            "normal" => Ok(InitKind::Normal),
            other => Err(Error::InvalidArgument(format!(
                "unknown init '{other}' (expected glorot|he|uniform|normal)"
            ))),
        }
    }
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Glorot-uniform weight matrix: entries i.i.d. on ±sqrt(6/(fan_in+fan_out)),
/// drawn row-major from `rng`. Biases are zero-initialized by callers.
pub fn glorot_init<S: Scalar>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngState,
) -> Result<Matrix<S>> {
    init_matrix(InitKind::Glorot, fan_in, fan_out, rng)
}

/// Weight matrix of shape `fan_in x fan_out` for any [`InitKind`].
pub fn init_matrix<S: Scalar>(
    kind: InitKind,
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngState,
) -> Result<Matrix<S>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "init needs positive fan values, got {fan_in}x{fan_out}"
        )));
    }
    let mut w = Matrix::zeros(fan_in, fan_out);
    match kind {
        InitKind::Glorot => {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.uniform(S::cast(-a), S::cast(a));
            }
        }
        InitKind::He => {
            let a = (6.0 / fan_in as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.uniform(S::cast(-a), S::cast(a));
            }
        }
        InitKind::Uniform => {
            for v in w.data_mut() {
                *v = rng.uniform(S::cast(-0.05), S::cast(0.05));
            }
        }
        InitKind::Normal => {
            for v in w.data_mut() {
                *v = rng.next_gaussian::<S>() * S::cast(0.05);
            }
        }
    }
    Ok(w)
}

/// Shared affine map applied to every row: `out[i] = x[i] * w + b`.
///
/// This is the "per-point 1D convolution" of the set encoders: because each
/// row is mapped independently, permuting the rows of `x` permutes the output
/// rows identically.
pub fn pointwise_linear<S: Scalar>(
    x: &Matrix<S>,
    w: &Matrix<S>,
    b: &[S],
) -> Result<Matrix<S>> {
    if b.len() != w.cols() {
        return Err(Error::ShapeMismatch(format!(
            "bias length {} does not match {} output channels",
            b.len(),
            w.cols()
        )));
    }
    let mut out = x.matmul(w)?;
    out.add_row_broadcast(b)?;
    Ok(out)
}

/// Entrywise `max(x, slope * x)` with `slope` in `[0, 1)`.
pub fn leaky_relu<S: Scalar>(x: &Matrix<S>, slope: f64) -> Result<Matrix<S>> {
    if !(0.0..1.0).contains(&slope) {
        return Err(Error::InvalidArgument(format!(
            "leaky_relu slope {slope} outside [0, 1)"
        )));
    }
    let s = S::cast(slope);
    let mut out = x.clone();
    out.map_inplace(|v| if v > S::zero() { v } else { s * v });
    Ok(out)
}

/// Entrywise `max(x, 0)`.
pub fn relu<S: Scalar>(x: &Matrix<S>) -> Matrix<S> {
    let mut out = x.clone();
    out.map_inplace(|v| if v > S::zero() { v } else { S::zero() });
    out
}

/// Componentwise maximum over all rows — the permutation-invariant set
/// aggregation. Errors on an empty set.
pub fn maxpool_set<S: Scalar>(x: &Matrix<S>) -> Result<Vec<S>> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("maxpool over an empty set".into()));
    }
    let mut out = x.row(0).to_vec();
    for r in 1..x.rows() {
        for (o, &v) in out.iter_mut().zip(x.row(r)) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}

/// Per-cloud maxpool over a stacked batch: row g of the output pools the
/// rows of cloud g, with clouds delimited by `cloud_sizes`.
pub fn maxpool_groups<S: Scalar>(
    x: &Matrix<S>,
    cloud_sizes: &[usize],
) -> Result<Matrix<S>> {
    check_group_sizes(x, cloud_sizes)?;
    let mut out = Matrix::zeros(cloud_sizes.len(), x.cols());
    let mut r0 = 0;
    for (g, &n) in cloud_sizes.iter().enumerate() {
        let pooled = maxpool_set(&x.slice_rows(r0, r0 + n)?)?;
        out.row_mut(g).copy_from_slice(&pooled);
        r0 += n;
    }
    Ok(out)
}

fn check_group_sizes<S: Scalar>(x: &Matrix<S>, cloud_sizes: &[usize]) -> Result<()> {
    if cloud_sizes.is_empty() || cloud_sizes.contains(&0) {
        return Err(Error::EmptyInput(
            "every cloud in a batch needs at least one point".into(),
        ));
    }
    let total: usize = cloud_sizes.iter().sum();
    if total != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "cloud sizes sum to {total} but the stacked matrix has {} rows",
            x.rows()
        )));
    }
    Ok(())
}

/// Mean and reciprocal standard deviation of `values`, with the addends
/// summed in IEEE total order so the result is independent of the order the
/// values were gathered in (this is what makes IN/BN statistics — and hence
/// whole embeddings — exactly permutation invariant).
fn ordered_stats<S: Scalar>(values: &mut [S], eps: f64) -> (S, S) {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = S::cast(values.len() as f64);
    let mut sum = S::zero();
    for &v in values.iter() {
        sum += v;
    }
    let mean = sum / n;
    // Deviations iterated in the same canonical (sorted-by-value) order.
    let mut sq = S::zero();
    for &v in values.iter() {
        let d = v - mean;
        sq += d * d;
    }
    let var = sq / n;
    (mean, S::one() / (var + S::cast(eps)).sqrt())
}

/// The four normalization modes over a stacked batch of clouds.
///
/// `x` holds all points of a mini-batch, cloud after cloud, with
/// `cloud_sizes` giving the row count of each cloud (only Instance mode reads
/// it). Statistics use population variance (`/n`) and no affine parameters;
/// `eps` guards the square root.
pub fn normalize<S: Scalar>(
    x: &Matrix<S>,
    kind: NormKind,
    cloud_sizes: &[usize],
    eps: f64,
) -> Result<Matrix<S>> {
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon {eps} must be > 0")));
    }
    match kind {
        NormKind::None => Ok(x.clone()),
        NormKind::Layer => {
            let mut out = x.clone();
            for r in out.data_mut().chunks_mut(x.cols().max(1)) {
                let n = S::cast(r.len() as f64);
                let mut sum = S::zero();
                for &v in r.iter() {
                    sum += v;
                }
                let mean = sum / n;
                let mut sq = S::zero();
                for &v in r.iter() {
                    let d = v - mean;
                    sq += d * d;
                }
                let rsd = S::one() / (sq / n + S::cast(eps)).sqrt();
                for v in r.iter_mut() {
                    *v = (*v - mean) * rsd;
                }
            }
            Ok(out)
        }
        NormKind::Batch => {
            if x.rows() < 2 {
                return Err(Error::DegenerateStats(
                    "batch normalization needs at least 2 rows".into(),
                ));
            }
            let stats: Vec<(S, S)> = (0..x.cols())
                .into_par_iter()
                .map(|c| {
                    let mut col: Vec<S> =
                        (0..x.rows()).map(|r| x.get(r, c)).collect();
                    ordered_stats(&mut col, eps)
                })
                .collect();
            Ok(apply_channel_stats(x, 0, x.rows(), &stats))
        }
        NormKind::Instance => {
            check_group_sizes(x, cloud_sizes)?;
            let mut starts = Vec::with_capacity(cloud_sizes.len());
            let mut r0 = 0;
            for &n in cloud_sizes {
                starts.push(r0);
                r0 += n;
            }
            let per_group: Vec<Vec<(S, S)>> = cloud_sizes
                .par_iter()
                .zip(&starts)
                .map(|(&n, &start)| {
                    (0..x.cols())
                        .map(|c| {
                            let mut col: Vec<S> =
                                (start..start + n).map(|r| x.get(r, c)).collect();
                            ordered_stats(&mut col, eps)
                        })
                        .collect()
                })
                .collect();
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for (g, &n) in cloud_sizes.iter().enumerate() {
                let part = apply_channel_stats(x, starts[g], n, &per_group[g]);
                out.data_mut()[starts[g] * x.cols()..(starts[g] + n) * x.cols()]
                    .copy_from_slice(part.data());
            }
            Ok(out)
        }
    }
}

/// Applies `(x - mean) * rsd` per channel to rows `start..start+n`.
fn apply_channel_stats<S: Scalar>(
    x: &Matrix<S>,
    start: usize,
    n: usize,
    stats: &[(S, S)],
) -> Matrix<S> {
    let mut out = Matrix::zeros(n, x.cols());
    for r in 0..n {
        let src = x.row(start + r);
        let dst = out.row_mut(r);
        for c in 0..src.len() {
            let (mean, rsd) = stats[c];
            dst[c] = (src[c] - mean) * rsd;
        }
    }
    out
}

/// Mean cross-entropy of softmax(logits) against integer labels, and its
/// gradient `(softmax - onehot) / B`. Row-wise max subtraction keeps the
/// exponentials finite for any logit magnitude.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Matrix<S>,
    labels: &[usize],
) -> Result<(S, Matrix<S>)> {
    let (b, k) = (logits.rows(), logits.cols());
    if b == 0 {
        return Err(Error::EmptyInput("cross-entropy of an empty batch".into()));
    }
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{b} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let bf = S::cast(b as f64);
    let mut grad = Matrix::zeros(b, k);
    let mut loss = S::zero();
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut m = row[0];
        for &v in &row[1..] {
            if v > m {
                m = v;
            }
        }
        let mut z = S::zero();
        let g = grad.row_mut(r);
        for (c, &v) in row.iter().enumerate() {
            let e = (v - m).exp();
            g[c] = e;
            z += e;
        }
        loss += z.ln() - (row[y] - m);
        for (c, gv) in g.iter_mut().enumerate() {
            let mut p = *gv / z;
            if c == y {
                p -= S::one();
            }
            *gv = p / bf;
        }
    }
    Ok((loss / bf, grad))
}
