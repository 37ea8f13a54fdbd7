//! An MLP decoder trained (with Adam) to reconstruct pointclouds from
//! frozen embeddings under the Chamfer loss — the encoder itself stays
//! untouched; only the decoder learns.
//!
//! Architecture: `FC(input, h1) -> ReLU -> FC(h1, h2) -> ReLU ->
//! FC(h2, point_dim * n_out)`, the output row reshaped into an
//! `n_out x point_dim` cloud. The Chamfer loss uses exact nearest
//! neighbours (lowest index on ties) in both directions, and its gradient
//! with respect to the predicted points is exact wherever the
//! nearest-neighbour assignments are locally constant.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::chamfer::nearest_row;
use crate::embedding::{batch_bounds, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{init_matrix, InitKind};
use crate::probes::{adam_step, ParamTensor};
use crate::rng::{derive_seed, RngState};
use crate::scalar::Scalar;

/// Training configuration for the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub input_dim: usize,
    pub hidden: (usize, usize),
    /// Points produced per reconstructed cloud.
    pub n_out: usize,
    /// Coordinate dimension of the clouds (2 or 3).
    pub point_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl DecoderSpec {
    pub fn new(n_out: usize, point_dim: usize, seed: u64) -> Self {
        DecoderSpec {
            input_dim: 1024,
            hidden: (1024, 1024),
            n_out,
            point_dim,
            epochs: 100,
            batch_size: 32,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.0 == 0 || self.hidden.1 == 0 || self.n_out == 0 {
            return Err(Error::InvalidArgument("zero decoder width".into()));
        }
        if !(self.point_dim == 2 || self.point_dim == 3) {
            return Err(Error::InvalidArgument(format!(
                "point_dim {} outside {{2, 3}}",
                self.point_dim
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("lr must be >= 0, adam_eps > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} {b} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// The decoder's parameters and Adam state. Tensors in canonical order:
/// `[w1, b1, w2, b2, w3, b3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel<S> {
    spec: DecoderSpec,
    tensors: Vec<ParamTensor<S>>,
    step: u64,
}

struct ForwardCache<S> {
    /// Post-ReLU hidden activations (also the linear inputs of the next layer).
    h1: Matrix<S>,
    h2: Matrix<S>,
    /// Flat output rows, one reconstructed cloud per row.
    out: Matrix<S>,
}

fn column_sums<S: Scalar>(m: &Matrix<S>) -> Vec<S> {
    let mut out = vec![S::zero(); m.cols()];
    for r in 0..m.rows() {
        for (acc, &v) in out.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    out
}

impl<S: Scalar> DecoderModel<S> {
    /// Glorot-uniform weights drawn in canonical order from
    /// `derive_seed(spec.seed, 0)`, zero biases.
    pub fn init(spec: &DecoderSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngState::new(derive_seed(spec.seed, 0));
        let out_dim = spec.point_dim * spec.n_out;
        let dims = [spec.input_dim, spec.hidden.0, spec.hidden.1, out_dim];
        let mut tensors = Vec::with_capacity(6);
        for i in 0..3 {
            tensors.push(ParamTensor::new(init_matrix(
                InitKind::Glorot,
                dims[i],
                dims[i + 1],
                &mut rng,
            )?));
            tensors.push(ParamTensor::new(Matrix::zeros(1, dims[i + 1])));
        }
        Ok(DecoderModel { spec: spec.clone(), tensors, step: 0 })
    }

    pub fn spec(&self) -> &DecoderSpec {
        &self.spec
    }

    fn linear(&self, x: &Matrix<S>, w: usize, b: usize) -> Result<Matrix<S>> {
        let mut z = x.matmul(&self.tensors[w].data)?;
        z.add_row_broadcast(self.tensors[b].data.row(0))?;
        Ok(z)
    }

    fn forward(&self, x: &Matrix<S>) -> Result<ForwardCache<S>> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "decoder input is {}-dim, expected {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let mut h1 = self.linear(x, 0, 1)?;
        h1.map_inplace(|v| if v > S::zero() { v } else { S::zero() });
        let mut h2 = self.linear(&h1, 2, 3)?;
        h2.map_inplace(|v| if v > S::zero() { v } else { S::zero() });
        let out = self.linear(&h2, 4, 5)?;
        Ok(ForwardCache { h1, h2, out })
    }

    /// Reconstructs one cloud per embedding row.
    pub fn decode(&self, x: &Matrix<S>) -> Result<Vec<Matrix<S>>> {
        let cache = self.forward(x)?;
        (0..x.rows()).map(|r| self.reshape_row(&cache.out, r)).collect()
    }

    fn reshape_row(&self, out: &Matrix<S>, r: usize) -> Result<Matrix<S>> {
        Matrix::from_vec(self.spec.n_out, self.spec.point_dim, out.row(r).to_vec())
    }

    /// Loss and parameter gradients of one batch: the mean Chamfer distance
    /// between each reconstructed cloud and its target.
    fn loss_and_grads(
        &self,
        x: &Matrix<S>,
        targets: &[&Matrix<S>],
    ) -> Result<(S, Vec<Matrix<S>>)> {
        if targets.len() != x.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} embeddings vs {} target clouds",
                x.rows(),
                targets.len()
            )));
        }
        let cache = self.forward(x)?;
        let b = x.rows();
        let inv_b = S::one() / S::cast(b as f64);
        // Per-sample Chamfer loss and gradient (parallel, order-stable).
        let per_sample: Vec<Result<(S, Matrix<S>)>> = (0..b)
            .into_par_iter()
            .map(|r| {
                let pred = self.reshape_row(&cache.out, r)?;
                chamfer_backward(&pred, targets[r])
            })
            .collect();
        let mut loss = S::zero();
        let mut dout = Matrix::zeros(b, cache.out.cols());
        for (r, res) in per_sample.into_iter().enumerate() {
            let (l, dpred) = res?;
            loss += l * inv_b;
            for (o, &g) in dout.row_mut(r).iter_mut().zip(dpred.data()) {
                *o = g * inv_b;
            }
        }
        // Backprop through the three linear layers.
        let mut grads: Vec<Matrix<S>> = self
            .tensors
            .iter()
            .map(|t| Matrix::zeros(t.data.rows(), t.data.cols()))
            .collect();
        grads[4] = cache.h2.transpose().matmul(&dout)?;
        grads[5] = Matrix::from_vec(1, dout.cols(), column_sums(&dout))?;
        let mut dh2 = dout.matmul(&self.tensors[4].data.transpose())?;
        for (g, &h) in dh2.data_mut().iter_mut().zip(cache.h2.data()) {
            if h <= S::zero() {
                *g = S::zero();
            }
        }
        grads[2] = cache.h1.transpose().matmul(&dh2)?;
        grads[3] = Matrix::from_vec(1, dh2.cols(), column_sums(&dh2))?;
        let mut dh1 = dh2.matmul(&self.tensors[2].data.transpose())?;
        for (g, &h) in dh1.data_mut().iter_mut().zip(cache.h1.data()) {
            if h <= S::zero() {
                *g = S::zero();
            }
        }
        grads[0] = x.transpose().matmul(&dh1)?;
        grads[1] = Matrix::from_vec(1, dh1.cols(), column_sums(&dh1))?;
        Ok((loss, grads))
    }

    fn apply_grads(&mut self, grads: &[Matrix<S>]) -> Result<()> {
        self.step += 1;
        let (lr, b1, b2, eps) = (
            S::cast(self.spec.lr),
            S::cast(self.spec.beta1),
            S::cast(self.spec.beta2),
            S::cast(self.spec.adam_eps),
        );
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            adam_step(t, g, lr, b1, b2, eps, self.step)?;
        }
        Ok(())
    }
}

/// Chamfer loss of one predicted cloud against its target, plus the exact
/// gradient with respect to every predicted point:
/// `2 (p - nn_gt(p)) / |P|` from the forward direction, plus
/// `sum_{g : nn_pred(g) = p} 2 (p - g) / |G|` from the backward direction.
pub fn chamfer_backward<S: Scalar>(pred: &Matrix<S>, gt: &Matrix<S>) -> Result<(S, Matrix<S>)> {
    if pred.rows() == 0 || gt.rows() == 0 {
        return Err(Error::EmptyInput("Chamfer loss of an empty cloud".into()));
    }
    if pred.cols() != gt.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}-D prediction vs {}-D target",
            pred.cols(),
            gt.cols()
        )));
    }
    let np = S::cast(pred.rows() as f64);
    let ng = S::cast(gt.rows() as f64);
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = S::zero();
    let two = S::cast(2.0);
    for i in 0..pred.rows() {
        let (j, d) = nearest_row(pred.row(i), gt);
        loss += d / np;
        let g = gt.row(j).to_vec();
        for (c, o) in grad.row_mut(i).iter_mut().enumerate() {
            *o += two * (pred.get(i, c) - g[c]) / np;
        }
    }
    for j in 0..gt.rows() {
        let (i, d) = nearest_row(gt.row(j), pred);
        loss += d / ng;
        let g = gt.row(j).to_vec();
        for (c, o) in grad.row_mut(i).iter_mut().enumerate() {
            *o += two * (pred.get(i, c) - g[c]) / ng;
        }
    }
    Ok((loss, grad))
}

/// Mean Chamfer distance between reconstructions and targets, evaluated in
/// fixed-size chunks (parallel per item, summed in item order).
pub fn eval_chamfer<S: Scalar>(
    model: &DecoderModel<S>,
    embeddings: &EmbeddingMatrix<S>,
    targets: &[&Matrix<S>],
) -> Result<f64> {
    if embeddings.n_items() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} targets",
            embeddings.n_items(),
            targets.len()
        )));
    }
    if embeddings.n_items() == 0 {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    let mut total = 0.0;
    let mut lo = 0;
    while lo < embeddings.n_items() {
        let hi = (lo + 256).min(embeddings.n_items());
        let chunk = embeddings.values.slice_rows(lo, hi)?;
        let clouds = model.decode(&chunk)?;
        let dists: Vec<Result<S>> = clouds
            .par_iter()
            .zip(&targets[lo..hi])
            .map(|(pred, gt)| crate::analysis::chamfer_distance(pred, gt))
            .collect();
        for d in dists {
            total += d?.to_f64();
        }
        lo = hi;
    }
    Ok(total / embeddings.n_items() as f64)
}

/// One decoder training run's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderReport {
    pub epochs: usize,
    /// Mean training Chamfer loss per epoch (under the then-current weights).
    pub epoch_chamfer: Vec<f64>,
    pub final_train_chamfer: f64,
    pub heldout_chamfer: Option<f64>,
    pub wall_s: f64,
}

/// Trains a decoder on (embedding, cloud) pairs; `heldout` is evaluated
/// once at the end. Randomness: weight init from `derive_seed(seed, 0)`,
/// epoch shuffling from `derive_seed(seed, 1)`.
pub fn train_decoder<S: Scalar>(
    spec: &DecoderSpec,
    train: &EmbeddingMatrix<S>,
    train_targets: &[&Matrix<S>],
    heldout: Option<(&EmbeddingMatrix<S>, &[&Matrix<S>])>,
) -> Result<(DecoderModel<S>, DecoderReport)> {
    spec.validate()?;
    if train.n_items() == 0 {
        return Err(Error::EmptyInput("no training pairs".into()));
    }
    if train.n_items() != train_targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} target clouds",
            train.n_items(),
            train_targets.len()
        )));
    }
    if train.dim() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "embeddings are {}-dim, decoder expects {}",
            train.dim(),
            spec.input_dim
        )));
    }
    for t in train_targets {
        if t.cols() != spec.point_dim {
            return Err(Error::ShapeMismatch(format!(
                "target cloud is {}-D, decoder produces {}-D points",
                t.cols(),
                spec.point_dim
            )));
        }
    }
    let start = Instant::now();
    let mut model = DecoderModel::init(spec)?;
    let mut shuffle_rng = RngState::new(derive_seed(spec.seed, 1));
    let mut order: Vec<usize> = (0..train.n_items()).collect();
    let mut epoch_chamfer = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for &(lo, hi) in &batch_bounds(order.len(), spec.batch_size) {
            let idx = &order[lo..hi];
            let x = train.values.take_rows(idx)?;
            let targets: Vec<&Matrix<S>> = idx.iter().map(|&i| train_targets[i]).collect();
            let (loss, grads) = model.loss_and_grads(&x, &targets)?;
            if !loss.to_f64().is_finite() {
                return Err(Error::NonFinite(format!("decoder loss diverged at epoch {epoch}")));
            }
            model.apply_grads(&grads)?;
            loss_sum += loss.to_f64() * (hi - lo) as f64;
        }
        epoch_chamfer.push(loss_sum / order.len() as f64);
    }
    let final_train_chamfer = eval_chamfer(&model, train, train_targets)?;
    let heldout_chamfer = match heldout {
        Some((em, ts)) => Some(eval_chamfer(&model, em, ts)?),
        None => None,
    };
    let report = DecoderReport {
        epochs: spec.epochs,
        epoch_chamfer,
        final_train_chamfer,
        heldout_chamfer,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
