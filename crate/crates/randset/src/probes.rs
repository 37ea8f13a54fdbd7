//! Probe classifiers trained on frozen embeddings, and the Adam optimizer
//! they (and the decoder) share.
//!
//! Two probes measure how much class information an embedding carries:
//!
//! - `LinClf`: a single fully connected layer `1024 -> K`.
//! - `NonLinClf`: `FC(1024,512) -> BatchNorm -> LeakyReLU(0.01) ->
//!   Dropout -> FC(512,256) -> BatchNorm -> LeakyReLU -> Dropout -> FC(256,K)`.
//!
//! Training uses softmax cross-entropy and Adam. Batch normalization here is
//! the trainable kind: biased batch variance inside the normalization,
//! unbiased batch variance in the running-average update, momentum 0.1, and
//! running statistics at evaluation time. Dropout is inverted (activations
//! scaled by 1/keep at train time, identity at eval). The reported score of
//! a run is the best test accuracy over epochs.
//!
//! All randomness comes from three independent streams derived from the
//! probe seed: weight init, epoch shuffling, dropout masks — so a run
//! replays exactly.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::{batch_bounds, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{init_matrix, softmax_cross_entropy, InitKind};
use crate::rng::{derive_seed, RngState};
use crate::scalar::Scalar;

/// Rows per chunk when evaluating accuracy over a large embedding matrix.
const EVAL_CHUNK: usize = 512;

/// The two probe architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    NonLinear,
}

impl ProbeKind {
    pub fn code(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linclf",
            ProbeKind::NonLinear => "nonlinclf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linclf" | "linear" => Ok(ProbeKind::Linear),
            "nonlinclf" | "nonlinear" => Ok(ProbeKind::NonLinear),
            other => Err(Error::InvalidArgument(format!(
                "unknown probe '{other}' (expected linclf|nonlinclf)"
            ))),
        }
    }

    pub const ALL: [ProbeKind; 2] = [ProbeKind::Linear, ProbeKind::NonLinear];
}

impl std::fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Full training configuration of a probe. `dropout` is a drop probability
/// (the fraction of activations zeroed), matching the convention of the
/// usual deep-learning libraries; set `dropout_is_keep` to reinterpret the
/// same number as a keep probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub input_dim: usize,
    pub n_classes: usize,
    pub hidden: (usize, usize),
    pub dropout: f64,
    pub dropout_is_keep: bool,
    pub leaky_slope: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl ProbeSpec {
    pub fn linear(n_classes: usize, seed: u64) -> Self {
        ProbeSpec {
            kind: ProbeKind::Linear,
            input_dim: 1024,
            n_classes,
            hidden: (512, 256),
            dropout: 0.8,
            dropout_is_keep: false,
            leaky_slope: 0.01,
            epochs: 300,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            seed,
        }
    }

    pub fn nonlinear(n_classes: usize, seed: u64) -> Self {
        ProbeSpec { kind: ProbeKind::NonLinear, ..ProbeSpec::linear(n_classes, seed) }
    }

    pub fn of_kind(kind: ProbeKind, n_classes: usize, seed: u64) -> Self {
        match kind {
            ProbeKind::Linear => ProbeSpec::linear(n_classes, seed),
            ProbeKind::NonLinear => ProbeSpec::nonlinear(n_classes, seed),
        }
    }

    /// Keep probability actually used by the dropout layers.
    pub fn keep_prob(&self) -> f64 {
        if self.dropout_is_keep {
            self.dropout
        } else {
            1.0 - self.dropout
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "probe needs input_dim > 0 and >= 2 classes (got {} / {})",
                self.input_dim, self.n_classes
            )));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::InvalidArgument("zero hidden width".into()));
        }
        let keep = self.keep_prob();
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dropout keep probability {keep} outside (0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::InvalidArgument(format!(
                "leaky slope {} outside [0, 1)",
                self.leaky_slope
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        if self.kind == ProbeKind::NonLinear && self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch-normalized probe needs batch_size >= 2".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) || !(self.bn_eps > 0.0) {
            return Err(Error::InvalidArgument("lr, adam_eps, bn_eps must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidArgument(format!(
                "bn_momentum {} outside [0, 1]",
                self.bn_momentum
            )));
        }
        Ok(())
    }
}

/// One trainable tensor with its Adam moment estimates. Vectors are stored
/// as 1-row matrices so the optimizer treats everything uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<S> {
    pub data: Matrix<S>,
    pub m: Matrix<S>,
    pub v: Matrix<S>,
}

impl<S: Scalar> ParamTensor<S> {
    pub fn new(data: Matrix<S>) -> Self {
        let m = Matrix::zeros(data.rows(), data.cols());
        let v = Matrix::zeros(data.rows(), data.cols());
        ParamTensor { data, m, v }
    }
}

/// One Adam update on a tensor. `step` is the 1-based shared step counter
/// (used for bias correction); the caller increments it once per optimizer
/// step, not per tensor.
pub fn adam_step<S: Scalar>(
    t: &mut ParamTensor<S>,
    grad: &Matrix<S>,
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
    step: u64,
) -> Result<()> {
    if grad.rows() != t.data.rows() || grad.cols() != t.data.cols() {
        return Err(Error::ShapeMismatch(format!(
            "gradient {}x{} for a {}x{} tensor",
            grad.rows(),
            grad.cols(),
            t.data.rows(),
            t.data.cols()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("Adam step counter starts at 1".into()));
    }
    let one = S::one();
    let bc1 = one - beta1.powi(step.min(i32::MAX as u64) as i32);
    let bc2 = one - beta2.powi(step.min(i32::MAX as u64) as i32);
    let md = t.m.data_mut();
    let vd = t.v.data_mut();
    let gd = grad.data();
    let xd = t.data.data_mut();
    for i in 0..gd.len() {
        let g = gd[i];
        md[i] = beta1 * md[i] + (one - beta1) * g;
        vd[i] = beta2 * vd[i] + (one - beta2) * g * g;
        let mhat = md[i] / bc1;
        let vhat = vd[i] / bc2;
        xd[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Running statistics of one trainable batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
struct RunningNorm<S> {
    mean: Vec<S>,
    var: Vec<S>,
}

/// A probe with its parameters, Adam state, running batch-norm statistics,
/// and the shared optimizer step counter.
///
/// Tensors follow a canonical order: for each hidden block
/// `[weight, bias, gamma, beta]`, then the final `[weight, bias]`. The
/// linear probe has only the final pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel<S> {
    spec: ProbeSpec,
    tensors: Vec<ParamTensor<S>>,
    running: Vec<RunningNorm<S>>,
    step: u64,
}

/// Everything the backward pass needs from one training-mode forward pass.
struct Cache<S> {
    /// Input to each hidden block's linear layer.
    block_in: Vec<Matrix<S>>,
    /// Normalized activations of each batch-norm layer.
    xhat: Vec<Matrix<S>>,
    batch_mean: Vec<Vec<S>>,
    batch_var: Vec<Vec<S>>,
    inv_std: Vec<Vec<S>>,
    /// Batch-norm output = input of each LeakyReLU.
    act_in: Vec<Matrix<S>>,
    /// Scaled dropout masks (entries 0 or 1/keep); `None` when keep = 1.
    mask: Vec<Option<Matrix<S>>>,
    /// Input to the final linear layer.
    final_in: Matrix<S>,
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

impl<S: Scalar> ProbeModel<S> {
    /// Initializes a probe from `spec`: Glorot-uniform weights drawn in
    /// canonical tensor order from the stream `derive_seed(spec.seed, 0)`,
    /// zero biases, unit gammas, zero betas, running stats (0, 1).
    pub fn init(spec: &ProbeSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngState::new(derive_seed(spec.seed, 0));
        let mut tensors = Vec::new();
        let mut running = Vec::new();
        match spec.kind {
            ProbeKind::Linear => {
                tensors.push(ParamTensor::new(init_matrix(
                    InitKind::Glorot,
                    spec.input_dim,
                    spec.n_classes,
                    &mut rng,
                )?));
                tensors.push(ParamTensor::new(Matrix::zeros(1, spec.n_classes)));
            }
            ProbeKind::NonLinear => {
                let dims = [spec.input_dim, spec.hidden.0, spec.hidden.1, spec.n_classes];
                for i in 0..2 {
                    let (d_in, d_out) = (dims[i], dims[i + 1]);
                    tensors.push(ParamTensor::new(init_matrix(
                        InitKind::Glorot,
                        d_in,
                        d_out,
                        &mut rng,
                    )?));
                    tensors.push(ParamTensor::new(Matrix::zeros(1, d_out)));
                    let mut gamma = Matrix::zeros(1, d_out);
                    gamma.map_inplace(|_| S::one());
                    tensors.push(ParamTensor::new(gamma));
                    tensors.push(ParamTensor::new(Matrix::zeros(1, d_out)));
                    running.push(RunningNorm {
                        mean: vec![S::zero(); d_out],
                        var: vec![S::one(); d_out],
                    });
                }
                tensors.push(ParamTensor::new(init_matrix(
                    InitKind::Glorot,
                    dims[2],
                    dims[3],
                    &mut rng,
                )?));
                tensors.push(ParamTensor::new(Matrix::zeros(1, spec.n_classes)));
            }
        }
        Ok(ProbeModel { spec: spec.clone(), tensors, running, step: 0 })
    }

    pub fn spec(&self) -> &ProbeSpec {
        &self.spec
    }

    pub fn n_tensors(&self) -> usize {
        self.tensors.len()
    }

    /// Tensor `i` in canonical order (see the type docs).
    pub fn tensor(&self, i: usize) -> &Matrix<S> {
        &self.tensors[i].data
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Matrix<S> {
        &mut self.tensors[i].data
    }

    /// Number of hidden (FC + BN + LeakyReLU + Dropout) blocks.
    fn n_blocks(&self) -> usize {
        match self.spec.kind {
            ProbeKind::Linear => 0,
            ProbeKind::NonLinear => 2,
        }
    }

    /// Tensor indices of hidden block `b`.
    fn block_idx(b: usize) -> (usize, usize, usize, usize) {
        (4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3)
    }

    /// Tensor indices of the final linear layer.
    fn final_idx(&self) -> (usize, usize) {
        let base = 4 * self.n_blocks();
        (base, base + 1)
    }

    fn linear(&self, x: &Matrix<S>, w: usize, b: usize) -> Result<Matrix<S>> {
        let mut z = x.matmul(&self.tensors[w].data)?;
        z.add_row_broadcast(self.tensors[b].data.row(0))?;
        Ok(z)
    }

    /// Training-mode forward. Uses batch statistics for the norm layers and
    /// draws dropout masks from `dropout_rng` (row-major element order).
    /// Does not mutate the model; running statistics are updated separately
    /// via [`ProbeModel::update_running`].
    fn forward_train(
        &self,
        x: &Matrix<S>,
        dropout_rng: Option<&mut RngState>,
    ) -> Result<(Matrix<S>, Cache<S>)> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "probe input is {}-dim, expected {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let n_blocks = self.n_blocks();
        if n_blocks > 0 && x.rows() < 2 {
            return Err(Error::DegenerateStats(
                "batch-normalized probe needs training batches of >= 2 rows".into(),
            ));
        }
        let keep = S::cast(self.spec.keep_prob());
        let mut rng = dropout_rng;
        let mut cache = Cache {
            block_in: Vec::new(),
            xhat: Vec::new(),
            batch_mean: Vec::new(),
            batch_var: Vec::new(),
            inv_std: Vec::new(),
            act_in: Vec::new(),
            mask: Vec::new(),
            final_in: Matrix::zeros(0, 0),
            };
        let mut h = x.clone();
        for bidx in 0..n_blocks {
            let (wi, bi, gi, bei) = Self::block_idx(bidx);
            cache.block_in.push(h.clone());
            let z = self.linear(&h, wi, bi)?;
            // Batch norm with batch statistics (biased variance).
            let b_rows = z.rows();
            let inv_b = S::one() / S::cast(b_rows as f64);
            let mut mean = column_sums(&z);
            for m in &mut mean {
                *m *= inv_b;
            }
            let mut var = vec![S::zero(); z.cols()];
            for r in 0..b_rows {
                for (c, &v) in z.row(r).iter().enumerate() {
                    let d = v - mean[c];
                    var[c] += d * d;
                }
            }
            for v in &mut var {
                *v *= inv_b;
            }
            let inv_std: Vec<S> = var
                .iter()
                .map(|&v| S::one() / (v + S::cast(self.spec.bn_eps)).sqrt())
                .collect();
            let mut xhat = z;
            for r in 0..b_rows {
                for (c, v) in xhat.row_mut(r).iter_mut().enumerate() {
                    *v = (*v - mean[c]) * inv_std[c];
                }
            }
            let gamma = self.tensors[gi].data.row(0);
            let beta = self.tensors[bei].data.row(0);
            let mut y = xhat.clone();
            for r in 0..b_rows {
                for (c, v) in y.row_mut(r).iter_mut().enumerate() {
                    *v = *v * gamma[c] + beta[c];
                }
            }
            cache.xhat.push(xhat);
            cache.batch_mean.push(mean);
            cache.batch_var.push(var);
            cache.inv_std.push(inv_std);
            cache.act_in.push(y.clone());
            // LeakyReLU.
            let slope = S::cast(self.spec.leaky_slope);
            let mut a = y;
            a.map_inplace(|v| if v > S::zero() { v } else { slope * v });
            // Inverted dropout.
            if keep < S::one() {
                let rng = rng.as_deref_mut().ok_or_else(|| {
                    Error::InvalidArgument("dropout requires an RNG stream".into())
                })?;
                let inv_keep = S::one() / keep;
                let mut mask = Matrix::zeros(a.rows(), a.cols());
                for v in mask.data_mut() {
                    let u = S::cast(rng.next_f64());
                    *v = if u < keep { inv_keep } else { S::zero() };
                }
                for (av, &mv) in a.data_mut().iter_mut().zip(mask.data()) {
                    *av *= mv;
                }
                cache.mask.push(Some(mask));
            } else {
                cache.mask.push(None);
            }
            h = a;
        }
        cache.final_in = h.clone();
        let (wi, bi) = self.final_idx();
        let logits = self.linear(&h, wi, bi)?;
        Ok((logits, cache))
    }

    /// Folds one batch's statistics into the running estimates:
    /// `running = (1 - momentum) * running + momentum * batch`, with the
    /// unbiased batch variance (factor B/(B-1)).
    fn update_running(&mut self, cache: &Cache<S>) {
        let mom = S::cast(self.spec.bn_momentum);
        let one = S::one();
        for (bidx, rn) in self.running.iter_mut().enumerate() {
            let b_rows = cache.block_in[bidx].rows();
            let unbias = S::cast(b_rows as f64 / (b_rows as f64 - 1.0));
            for c in 0..rn.mean.len() {
                rn.mean[c] = (one - mom) * rn.mean[c] + mom * cache.batch_mean[bidx][c];
                rn.var[c] = (one - mom) * rn.var[c] + mom * cache.batch_var[bidx][c] * unbias;
            }
        }
    }

    /// Evaluation-mode forward: running statistics for the norm layers,
    /// dropout disabled.
    pub fn forward_eval(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "probe input is {}-dim, expected {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let mut h = x.clone();
        for bidx in 0..self.n_blocks() {
            let (wi, bi, gi, bei) = Self::block_idx(bidx);
            let mut z = self.linear(&h, wi, bi)?;
            let rn = &self.running[bidx];
            let gamma = self.tensors[gi].data.row(0);
            let beta = self.tensors[bei].data.row(0);
            let eps = S::cast(self.spec.bn_eps);
            for r in 0..z.rows() {
                for (c, v) in z.row_mut(r).iter_mut().enumerate() {
                    let xhat = (*v - rn.mean[c]) / (rn.var[c] + eps).sqrt();
                    *v = xhat * gamma[c] + beta[c];
                }
            }
            let slope = S::cast(self.spec.leaky_slope);
            z.map_inplace(|v| if v > S::zero() { v } else { slope * v });
            h = z;
        }
        let (wi, bi) = self.final_idx();
        self.linear(&h, wi, bi)
    }

    /// Gradients of the mean cross-entropy loss for one batch, in canonical
    /// tensor order. `dlogits` must already carry the 1/B factor.
    fn backward(&self, dlogits: &Matrix<S>, cache: &Cache<S>) -> Result<Vec<Matrix<S>>> {
        let n_blocks = self.n_blocks();
        let mut grads: Vec<Matrix<S>> = (0..self.tensors.len())
            .map(|i| Matrix::zeros(self.tensors[i].data.rows(), self.tensors[i].data.cols()))
            .collect();
        let (wi, bi) = self.final_idx();
        grads[wi] = cache.final_in.transpose().matmul(dlogits)?;
        grads[bi] = Matrix::from_vec(1, dlogits.cols(), column_sums(dlogits))?;
        if n_blocks == 0 {
            return Ok(grads);
        }
        let mut dh = dlogits.matmul(&self.tensors[wi].data.transpose())?;
        for bidx in (0..n_blocks).rev() {
            let (wi, bi, gi, bei) = Self::block_idx(bidx);
            // Dropout backward: same scaled mask.
            if let Some(mask) = &cache.mask[bidx] {
                for (g, &mv) in dh.data_mut().iter_mut().zip(mask.data()) {
                    *g *= mv;
                }
            }
            // LeakyReLU backward on the pre-activation sign.
            let slope = S::cast(self.spec.leaky_slope);
            for (g, &pre) in dh.data_mut().iter_mut().zip(cache.act_in[bidx].data()) {
                if pre <= S::zero() {
                    *g *= slope;
                }
            }
            // Batch-norm backward.
            let xhat = &cache.xhat[bidx];
            let gamma = self.tensors[gi].data.row(0);
            let b_rows = xhat.rows();
            let cols = xhat.cols();
            let mut dgamma = vec![S::zero(); cols];
            let mut dbeta = vec![S::zero(); cols];
            for r in 0..b_rows {
                for (c, (&dy, &xh)) in dh.row(r).iter().zip(xhat.row(r)).enumerate() {
                    dgamma[c] += dy * xh;
                    dbeta[c] += dy;
                }
            }
            // dxhat = dy * gamma; dx = inv_std/B * (B*dxhat - sum(dxhat)
            //         - xhat * sum(dxhat .* xhat)), per channel.
            let mut sum_dxhat = vec![S::zero(); cols];
            let mut sum_dxhat_xhat = vec![S::zero(); cols];
            for r in 0..b_rows {
                for (c, (&dy, &xh)) in dh.row(r).iter().zip(xhat.row(r)).enumerate() {
                    let dxh = dy * gamma[c];
                    sum_dxhat[c] += dxh;
                    sum_dxhat_xhat[c] += dxh * xh;
                }
            }
            let bsz = S::cast(b_rows as f64);
            let inv_b = S::one() / bsz;
            let mut dz = Matrix::zeros(b_rows, cols);
            for r in 0..b_rows {
                let dz_row = dz.row_mut(r);
                for c in 0..cols {
                    let dxh = dh.get(r, c) * gamma[c];
                    dz_row[c] = cache.inv_std[bidx][c]
                        * inv_b
                        * (bsz * dxh - sum_dxhat[c] - xhat.get(r, c) * sum_dxhat_xhat[c]);
                }
            }
            grads[gi] = Matrix::from_vec(1, cols, dgamma)?;
            grads[bei] = Matrix::from_vec(1, cols, dbeta)?;
            // Linear backward.
            grads[wi] = cache.block_in[bidx].transpose().matmul(&dz)?;
            grads[bi] = Matrix::from_vec(1, cols, column_sums(&dz))?;
            if bidx > 0 {
                dh = dz.matmul(&self.tensors[wi].data.transpose())?;
            }
        }
        Ok(grads)
    }

    /// One optimizer step over all tensors with the shared step counter.
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

    /// Loss and parameter gradients of one training batch, without touching
    /// the model (used by the trainer and by gradient checks).
    pub fn loss_and_grads(
        &self,
        x: &Matrix<S>,
        labels: &[usize],
        dropout_rng: Option<&mut RngState>,
    ) -> Result<(S, Vec<Matrix<S>>)> {
        let (logits, cache) = self.forward_train(x, dropout_rng)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&dlogits, &cache)?;
        Ok((loss, grads))
    }
}

/// One training run's outcome. `best_test_acc` (the reported score) is the
/// maximum test accuracy over epochs; per-epoch curves are kept for
/// inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub probe: String,
    pub seed: u64,
    pub epochs: usize,
    pub best_test_acc: f64,
    pub best_epoch: usize,
    pub final_test_acc: f64,
    pub final_train_acc: f64,
    pub epoch_losses: Vec<f64>,
    pub test_accs: Vec<f64>,
    pub wall_s: f64,
}

/// Fraction of rows whose highest logit (lowest index on ties) matches the
/// label. Evaluation runs in fixed-size chunks.
pub fn eval_accuracy<S: Scalar>(model: &ProbeModel<S>, data: &EmbeddingMatrix<S>) -> Result<f64> {
    if data.n_items() == 0 {
        return Err(Error::EmptyInput("empty evaluation set".into()));
    }
    let mut correct = 0usize;
    let mut lo = 0;
    while lo < data.n_items() {
        let hi = (lo + EVAL_CHUNK).min(data.n_items());
        let chunk = data.values.slice_rows(lo, hi)?;
        let logits = model.forward_eval(&chunk)?;
        for (r, &label) in data.labels[lo..hi].iter().enumerate() {
            let row = logits.row(r);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        lo = hi;
    }
    Ok(correct as f64 / data.n_items() as f64)
}

/// Trains a probe on frozen embeddings and evaluates on the test embeddings
/// after every epoch. Randomness comes from three streams derived from
/// `spec.seed`: 0 for weight init, 1 for epoch shuffling, 2 for dropout.
pub fn train_probe<S: Scalar>(
    spec: &ProbeSpec,
    train: &EmbeddingMatrix<S>,
    test: &EmbeddingMatrix<S>,
) -> Result<(ProbeModel<S>, TrainReport)> {
    spec.validate()?;
    for (name, em) in [("train", train), ("test", test)] {
        if em.n_items() == 0 {
            return Err(Error::EmptyInput(format!("{name} embeddings are empty")));
        }
        if em.dim() != spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "{name} embeddings are {}-dim, probe expects {}",
                em.dim(),
                spec.input_dim
            )));
        }
        if let Some(&bad) = em.labels.iter().find(|&&l| l >= spec.n_classes) {
            return Err(Error::InvalidArgument(format!(
                "{name} label {bad} outside {} classes",
                spec.n_classes
            )));
        }
    }
    let has_bn = spec.kind == ProbeKind::NonLinear;
    if has_bn && train.n_items() < 2 {
        return Err(Error::DegenerateStats(
            "batch-normalized probe needs at least 2 training rows".into(),
        ));
    }
    let start = Instant::now();
    let mut model = ProbeModel::init(spec)?;
    let mut shuffle_rng = RngState::new(derive_seed(spec.seed, 1));
    let mut dropout_rng = RngState::new(derive_seed(spec.seed, 2));
    let mut order: Vec<usize> = (0..train.n_items()).collect();
    let mut epoch_losses = Vec::with_capacity(spec.epochs);
    let mut test_accs = Vec::with_capacity(spec.epochs);
    let (mut best_test_acc, mut best_epoch) = (f64::NEG_INFINITY, 0);
    for epoch in 0..spec.epochs {
        shuffle_rng.shuffle(&mut order);
        let bounds = batch_bounds(order.len(), spec.batch_size);
        let mut loss_sum = 0.0;
        for &(lo, hi) in &bounds {
            let idx = &order[lo..hi];
            let x = train.values.take_rows(idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (logits, cache) = model.forward_train(&x, Some(&mut dropout_rng))?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.to_f64().is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss diverged at epoch {epoch} (batch {lo}..{hi})"
                )));
            }
            let grads = model.backward(&dlogits, &cache)?;
            model.update_running(&cache);
            model.apply_grads(&grads)?;
            loss_sum += loss.to_f64() * (hi - lo) as f64;
        }
        epoch_losses.push(loss_sum / order.len() as f64);
        let acc = eval_accuracy(&model, test)?;
        test_accs.push(acc);
        if acc > best_test_acc {
            best_test_acc = acc;
            best_epoch = epoch + 1;
        }
    }
    let final_train_acc = eval_accuracy(&model, train)?;
    let report = TrainReport {
        probe: spec.kind.code().to_string(),
        seed: spec.seed,
        epochs: spec.epochs,
        best_test_acc,
        best_epoch,
        final_test_acc: *test_accs.last().expect("at least one epoch"),
        final_train_acc,
        epoch_losses,
        test_accs,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Mean and sample standard deviation (n-1 denominator) of a set of run
/// scores; `std` is `None` for a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mean: f64,
    pub std: Option<f64>,
}

/// Aggregates per-run scores into mean +/- sample std.
pub fn aggregate_runs(values: &[f64]) -> Result<RunStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no run scores to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some((ss / (n - 1.0)).sqrt())
    } else {
        None
    };
    Ok(RunStats { mean, std })
}

/// Builds spec overrides from string key-value pairs (parsed config
/// sections). Unknown keys are rejected.
pub fn apply_probe_overrides(spec: &mut ProbeSpec, kv: &BTreeMap<String, String>) -> Result<()> {
    for (key, value) in kv {
        let v = value.trim();
        let bad = |k: &str| Error::InvalidArgument(format!("bad probe {k} '{v}'"));
        match key.as_str() {
            "kind" => spec.kind = ProbeKind::parse(v)?,
            "input_dim" => spec.input_dim = v.parse().map_err(|_| bad(key))?,
            "n_classes" => spec.n_classes = v.parse().map_err(|_| bad(key))?,
            "hidden1" => spec.hidden.0 = v.parse().map_err(|_| bad(key))?,
            "hidden2" => spec.hidden.1 = v.parse().map_err(|_| bad(key))?,
            "dropout" => spec.dropout = v.parse().map_err(|_| bad(key))?,
            "dropout_is_keep" => spec.dropout_is_keep = v.parse().map_err(|_| bad(key))?,
            "leaky_slope" => spec.leaky_slope = v.parse().map_err(|_| bad(key))?,
            "epochs" => spec.epochs = v.parse().map_err(|_| bad(key))?,
            "batch_size" => spec.batch_size = v.parse().map_err(|_| bad(key))?,
            "lr" => spec.lr = v.parse().map_err(|_| bad(key))?,
            "beta1" => spec.beta1 = v.parse().map_err(|_| bad(key))?,
            "beta2" => spec.beta2 = v.parse().map_err(|_| bad(key))?,
            "adam_eps" => spec.adam_eps = v.parse().map_err(|_| bad(key))?,
            "bn_eps" => spec.bn_eps = v.parse().map_err(|_| bad(key))?,
            "bn_momentum" => spec.bn_momentum = v.parse().map_err(|_| bad(key))?,
            "seed" => spec.seed = v.parse().map_err(|_| bad(key))?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown probe key '{other}'")));
            }
        }
    }
    spec.validate()
}
