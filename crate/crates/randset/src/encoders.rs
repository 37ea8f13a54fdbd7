//! The four untrained set-function encoder families, expanded from an
//! [`EncoderSpec`] into frozen random parameters that map a pointcloud to a
//! 1024-dim embedding via per-point layers and a channel-wise max-pool.
//!
//! Families:
//! - `LinSet-NN`: per-point linear layers, no activation, no normalization.
//! - `LinSet`: the same with instance normalization after every layer.
//! - `PointNet`: per-point (linear → norm → ReLU) blocks, the norm chosen by
//!   the spec, no spatial transformers.
//! - `DeepSets`: permutation-equivariant blocks
//!   `relu(X·W + 1·maxpool(X)·V + b)`, no normalization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::PointCloud;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    init_matrix, maxpool_groups, normalize, pointwise_linear, relu, InitKind, NormKind,
    DEFAULT_NORM_EPS,
};
use crate::rng::RngState;
use crate::scalar::Scalar;

/// Every encoder ends in an embedding of this many channels.
pub const EMBED_DIM: usize = 1024;

/// The four encoder families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderFamily {
    LinSetNn,
    LinSet,
    PointNet,
    DeepSets,
}

impl EncoderFamily {
    pub fn code(self) -> &'static str {
        match self {
            EncoderFamily::LinSetNn => "linset-nn",
            EncoderFamily::LinSet => "linset",
            EncoderFamily::PointNet => "pointnet",
            EncoderFamily::DeepSets => "deepsets",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linset-nn" | "linsetnn" => Ok(EncoderFamily::LinSetNn),
            "linset" => Ok(EncoderFamily::LinSet),
            "pointnet" => Ok(EncoderFamily::PointNet),
            "deepsets" => Ok(EncoderFamily::DeepSets),
            other => Err(Error::InvalidArgument(format!(
                "unknown encoder family '{other}' (expected linset-nn|linset|pointnet|deepsets)"
            ))),
        }
    }

    pub const ALL: [EncoderFamily; 4] = [
        EncoderFamily::LinSetNn,
        EncoderFamily::LinSet,
        EncoderFamily::PointNet,
        EncoderFamily::DeepSets,
    ];
}

impl std::fmt::Display for EncoderFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Per-point block widths for a PointNet of `k` blocks (k in 1..=5). The
/// final width is pinned at [`EMBED_DIM`]; the prefix grows toward the
/// canonical chain.
pub fn pointnet_depth_widths(k: usize) -> Result<Vec<usize>> {
    match k {
        1 => Ok(vec![1024]),
        2 => Ok(vec![64, 1024]),
        3 => Ok(vec![64, 128, 1024]),
        4 => Ok(vec![64, 64, 128, 1024]),
        5 => Ok(vec![64, 64, 64, 128, 1024]),
        other => Err(Error::InvalidArgument(format!(
            "PointNet depth {other} outside 1..=5"
        ))),
    }
}

/// Widths used by both LinSet families.
pub const LINSET_WIDTHS: [usize; 3] = [64, 128, 1024];
/// Widths used by DeepSets.
pub const DEEPSETS_WIDTHS: [usize; 3] = [256, 512, 1024];

/// Complete description of an encoder: family, input dimension, block
/// widths, normalization, init, and the seed its weights are drawn from.
/// Two equal specs always expand to bit-identical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub family: EncoderFamily,
    pub input_dim: usize,
    pub widths: Vec<usize>,
    /// Normalization inside PointNet blocks. LinSet always uses Instance,
    /// LinSet-NN and DeepSets always none; for those families this field is
    /// ignored by the forward pass.
    pub norm: NormKind,
    pub norm_eps: f64,
    pub n_mlp_blocks: usize,
    pub init: InitKind,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn pointnet(input_dim: usize, n_blocks: usize, norm: NormKind, seed: u64) -> Result<Self> {
        let widths = pointnet_depth_widths(n_blocks)?;
        let spec = EncoderSpec {
            family: EncoderFamily::PointNet,
            input_dim,
            widths,
            norm,
            norm_eps: DEFAULT_NORM_EPS,
            n_mlp_blocks: n_blocks,
            init: InitKind::Glorot,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lin_set(input_dim: usize, seed: u64) -> Result<Self> {
        let spec = EncoderSpec {
            family: EncoderFamily::LinSet,
            input_dim,
            widths: LINSET_WIDTHS.to_vec(),
            norm: NormKind::Instance,
            norm_eps: DEFAULT_NORM_EPS,
            n_mlp_blocks: LINSET_WIDTHS.len(),
            init: InitKind::Glorot,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lin_set_nn(input_dim: usize, seed: u64) -> Result<Self> {
        let spec = EncoderSpec {
            family: EncoderFamily::LinSetNn,
            input_dim,
            widths: LINSET_WIDTHS.to_vec(),
            norm: NormKind::None,
            norm_eps: DEFAULT_NORM_EPS,
            n_mlp_blocks: LINSET_WIDTHS.len(),
            init: InitKind::Glorot,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn deep_sets(input_dim: usize, seed: u64) -> Result<Self> {
        let spec = EncoderSpec {
            family: EncoderFamily::DeepSets,
            input_dim,
            widths: DEEPSETS_WIDTHS.to_vec(),
            norm: NormKind::None,
            norm_eps: DEFAULT_NORM_EPS,
            n_mlp_blocks: DEEPSETS_WIDTHS.len(),
            init: InitKind::Glorot,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the default encoder of a family (PointNet gets instance norm
    /// and 4 blocks).
    pub fn family_default(family: EncoderFamily, input_dim: usize, seed: u64) -> Result<Self> {
        match family {
            EncoderFamily::PointNet => Self::pointnet(input_dim, 4, NormKind::Instance, seed),
            EncoderFamily::LinSet => Self::lin_set(input_dim, seed),
            EncoderFamily::LinSetNn => Self::lin_set_nn(input_dim, seed),
            EncoderFamily::DeepSets => Self::deep_sets(input_dim, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.input_dim == 2 || self.input_dim == 3) {
            return Err(Error::InvalidArgument(format!(
                "input_dim {} outside {{2, 3}}",
                self.input_dim
            )));
        }
        if self.widths.last() != Some(&EMBED_DIM) {
            return Err(Error::InvalidArgument(format!(
                "width chain {:?} must end in {EMBED_DIM}",
                self.widths
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        if !(1..=5).contains(&self.n_mlp_blocks) {
            return Err(Error::InvalidArgument(format!(
                "n_mlp_blocks {} outside 1..=5",
                self.n_mlp_blocks
            )));
        }
        if self.n_mlp_blocks != self.widths.len() {
            return Err(Error::InvalidArgument(format!(
                "n_mlp_blocks {} does not match {} widths",
                self.n_mlp_blocks,
                self.widths.len()
            )));
        }
        if self.norm_eps <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "norm_eps {} must be > 0",
                self.norm_eps
            )));
        }
        Ok(())
    }

    /// Normalization actually applied per block: fixed per family except
    /// for PointNet.
    pub fn effective_norm(&self) -> NormKind {
        match self.family {
            EncoderFamily::PointNet => self.norm,
            EncoderFamily::LinSet => NormKind::Instance,
            EncoderFamily::LinSetNn | EncoderFamily::DeepSets => NormKind::None,
        }
    }

    fn uses_relu(&self) -> bool {
        matches!(self.family, EncoderFamily::PointNet | EncoderFamily::DeepSets)
    }

    fn uses_context(&self) -> bool {
        matches!(self.family, EncoderFamily::DeepSets)
    }

    /// Serializes to a plain-text `key = value` block (one key per line,
    /// fixed order). [`EncoderSpec::from_kv`] inverts it.
    pub fn to_kv(&self) -> String {
        let widths = self
            .widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "family = {}\ninput_dim = {}\nwidths = {}\nnorm = {}\nnorm_eps = {}\n\
             n_mlp_blocks = {}\ninit = {}\nseed = {}\n",
            self.family, self.input_dim, widths, self.norm, self.norm_eps,
            self.n_mlp_blocks, self.init, self.seed
        )
    }

    /// Builds a spec from string key-value pairs (a parsed config section or
    /// a [`EncoderSpec::to_kv`] block). Required: `family`. Optional keys
    /// fall back to the family defaults; unknown keys are rejected.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        for key in kv.keys() {
            if !matches!(
                key.as_str(),
                "family" | "input_dim" | "widths" | "norm" | "norm_eps" | "n_mlp_blocks"
                    | "init" | "seed"
            ) {
                return Err(Error::InvalidArgument(format!(
                    "unknown encoder key '{key}'"
                )));
            }
        }
        let family = EncoderFamily::parse(
            kv.get("family")
                .ok_or_else(|| Error::InvalidArgument("encoder family missing".into()))?,
        )?;
        let input_dim = parse_num(kv, "input_dim", 2usize)?;
        let seed = parse_num(kv, "seed", 0u64)?;
        let mut spec = EncoderSpec::family_default(family, input_dim, seed)?;
        if let Some(n) = kv.get("norm") {
            spec.norm = NormKind::parse(n)?;
        }
        if let Some(k) = kv.get("n_mlp_blocks") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad n_mlp_blocks '{k}'")))?;
            if family == EncoderFamily::PointNet {
                spec.widths = pointnet_depth_widths(k)?;
            }
            spec.n_mlp_blocks = k;
        }
        if let Some(w) = kv.get("widths") {
            let widths: Result<Vec<usize>> = w
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidArgument(format!("bad width '{t}'")))
                })
                .collect();
            spec.widths = widths?;
            spec.n_mlp_blocks = spec.widths.len();
        }
        if let Some(e) = kv.get("norm_eps") {
            spec.norm_eps = e
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad norm_eps '{e}'")))?;
        }
        if let Some(i) = kv.get("init") {
            spec.init = InitKind::parse(i)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Compact tag used in file names and report rows, e.g. `pointnet-in4`.
    pub fn tag(&self) -> String {
        format!("{}-{}{}", self.family, self.effective_norm(), self.n_mlp_blocks)
    }
}

fn parse_num<T: std::str::FromStr>(
    kv: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad {key} '{v}'"))),
    }
}

/// One per-point block: the shared linear map, plus the context matrix `v`
/// for DeepSets (applied to the per-cloud maxpool of the block input).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<S> {
    pub w: Matrix<S>,
    pub b: Vec<S>,
    pub v: Option<Matrix<S>>,
}

/// An instantiated encoder: the spec plus its frozen random weights. No
/// operation mutates the parameters after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<S> {
    spec: EncoderSpec,
    layers: Vec<EncoderLayer<S>>,
}

/// One embedded cloud with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    pub values: Vec<S>,
    pub item_id: String,
    pub encoder_seed: u64,
}

/// Expands a spec into frozen weights: for each block, W is drawn first
/// (row-major), then the DeepSets context matrix V when present, then the
/// bias, uniform on ±1/sqrt(fan_in) following the convolution-layer
/// convention of mainstream deep-learning frameworks. Draws come from a
/// single stream seeded by `spec.seed`.
///
/// The bias term matters: under normalization it is cancelled by the very
/// next norm layer, but in un-normalized stacks it injects a constant,
/// input-independent component at every block. Because Glorot-scaled ReLU
/// layers shrink the signal while the bias stays put, depth degrades the
/// embeddings of norm-free encoders — the behaviour the normalization and
/// depth studies measure. Zero biases would make those stacks positively
/// homogeneous and suppress the effect.
pub fn build_encoder<S: Scalar>(spec: &EncoderSpec) -> Result<EncoderParams<S>> {
    spec.validate()?;
    let mut rng = RngState::new(spec.seed);
    let mut layers = Vec::with_capacity(spec.widths.len());
    let mut d_in = spec.input_dim;
    for &d_out in &spec.widths {
        let w = init_matrix(spec.init, d_in, d_out, &mut rng)?;
        let v = if spec.uses_context() {
            Some(init_matrix(spec.init, d_in, d_out, &mut rng)?)
        } else {
            None
        };
        let bound = (d_in as f64).sqrt().recip();
        let b = (0..d_out)
            .map(|_| S::from_f64(rng.uniform(-bound, bound)))
            .collect();
        layers.push(EncoderLayer { w, b, v });
        d_in = d_out;
    }
    Ok(EncoderParams { spec: spec.clone(), layers })
}

impl<S: Scalar> EncoderParams<S> {
    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[EncoderLayer<S>] {
        &self.layers
    }

    /// Assembles an encoder from externally supplied weights (injected-weight
    /// tests, reproduction audits). Validates the shape chain against the
    /// spec.
    pub fn from_parts(spec: EncoderSpec, layers: Vec<EncoderLayer<S>>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.widths.len() {
            return Err(Error::InvalidArgument(format!(
                "{} layers supplied for {} widths",
                layers.len(),
                spec.widths.len()
            )));
        }
        let mut d_in = spec.input_dim;
        for (i, (layer, &d_out)) in layers.iter().zip(&spec.widths).enumerate() {
            if layer.w.rows() != d_in || layer.w.cols() != d_out || layer.b.len() != d_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: expected {d_in}x{d_out} weights (+bias), got {}x{} (+{})",
                    layer.w.rows(),
                    layer.w.cols(),
                    layer.b.len()
                )));
            }
            match (&layer.v, spec.uses_context()) {
                (Some(v), true) => {
                    if v.rows() != d_in || v.cols() != d_out {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: context matrix is {}x{}, expected {d_in}x{d_out}",
                            v.rows(),
                            v.cols()
                        )));
                    }
                }
                (None, false) => {}
                (Some(_), false) => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i}: context matrix supplied for a family without context"
                    )));
                }
                (None, true) => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i}: DeepSets layer is missing its context matrix"
                    )));
                }
            }
            d_in = d_out;
        }
        Ok(EncoderParams { spec, layers })
    }

    /// Runs the per-point layer stack over a stacked batch (clouds delimited
    /// by `sizes`), returning per-point features of the final width.
    fn forward_stacked(&self, x: Matrix<S>, sizes: &[usize]) -> Result<Matrix<S>> {
        let norm = self.spec.effective_norm();
        let mut h = x;
        for layer in &self.layers {
            let mut z = pointwise_linear(&h, &layer.w, &layer.b)?;
            if let Some(v) = &layer.v {
                // DeepSets context: per-cloud maxpool of the block input,
                // mapped through V and broadcast back onto that cloud's rows.
                let pooled = maxpool_groups(&h, sizes)?;
                let ctx = pooled.matmul(v)?;
                let mut r0 = 0;
                for (g, &n) in sizes.iter().enumerate() {
                    let ctx_row = ctx.row(g);
                    for r in r0..r0 + n {
                        for (a, &b) in z.row_mut(r).iter_mut().zip(ctx_row) {
                            *a += b;
                        }
                    }
                    r0 += n;
                }
            }
            z = normalize(&z, norm, sizes, self.spec.norm_eps)?;
            if self.spec.uses_relu() {
                z = relu(&z);
            }
            h = z;
        }
        Ok(h)
    }

    /// Embeds a batch of clouds together. Needed over per-cloud calls only
    /// when the norm is BN (whose statistics couple the batch; BN requires
    /// at least 2 clouds); for every other configuration the batch grouping
    /// has no effect on the result.
    pub fn embed_batch(&self, clouds: &[&PointCloud<S>]) -> Result<Vec<Embedding<S>>> {
        if clouds.is_empty() {
            return Err(Error::EmptyInput("empty embedding batch".into()));
        }
        if self.spec.effective_norm() == NormKind::Batch && clouds.len() < 2 {
            return Err(Error::DegenerateStats(
                "batch normalization needs batches of at least 2 clouds".into(),
            ));
        }
        for c in clouds {
            if c.dim() != self.spec.input_dim {
                return Err(Error::ShapeMismatch(format!(
                    "cloud '{}' is {}-D but the encoder expects {}-D",
                    c.id,
                    c.dim(),
                    self.spec.input_dim
                )));
            }
        }
        let parts: Vec<&Matrix<S>> = clouds.iter().map(|c| &c.points).collect();
        let sizes: Vec<usize> = clouds.iter().map(|c| c.n_points()).collect();
        let stacked = Matrix::vstack(&parts)?;
        let features = self.forward_stacked(stacked, &sizes)?;
        let pooled = maxpool_groups(&features, &sizes)?;
        if !pooled.is_finite() {
            return Err(Error::NonFinite("embedding contains NaN or Inf".into()));
        }
        Ok(clouds
            .iter()
            .enumerate()
            .map(|(i, c)| Embedding {
                values: pooled.row(i).to_vec(),
                item_id: c.id.clone(),
                encoder_seed: self.spec.seed,
            })
            .collect())
    }

    /// Embeds one cloud (invalid for BN encoders, whose statistics need a
    /// batch).
    pub fn embed_cloud(&self, cloud: &PointCloud<S>) -> Result<Embedding<S>> {
        let mut out = self.embed_batch(&[cloud])?;
        Ok(out.pop().expect("one embedding per cloud"))
    }

    /// Dumps spec + weights to a binary file (magic, version, spec header,
    /// row-major f64 weights, FNV-1a 64 checksum) for reproduction audits.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        use crate::dataio::ByteWriter;
        let mut w = ByteWriter::new();
        w.str(&self.spec.to_kv());
        w.u32(self.layers.len() as u32);
        for layer in &self.layers {
            w.u32(layer.w.rows() as u32);
            w.u32(layer.w.cols() as u32);
            for &v in layer.w.data() {
                w.f64(v.to_f64());
            }
            for &v in &layer.b {
                w.f64(v.to_f64());
            }
            w.u32(layer.v.is_some() as u32);
            if let Some(v) = &layer.v {
                for &x in v.data() {
                    w.f64(x.to_f64());
                }
            }
        }
        let payload = w.buf;
        let mut file = Vec::with_capacity(payload.len() + 16);
        file.extend_from_slice(b"RSEP");
        file.extend_from_slice(&1u32.to_le_bytes());
        file.extend_from_slice(&payload);
        file.extend_from_slice(&crate::dataio::fnv1a64(&payload).to_le_bytes());
        std::fs::write(path, file)?;
        Ok(())
    }
}

impl EncoderParams<f64> {
    /// Reads a parameter dump written by [`EncoderParams::write_binary`];
    /// the round trip is bit-exact for f64 encoders.
    pub fn read_binary(path: &Path) -> Result<Self> {
        use crate::dataio::ByteReader;
        let bytes = std::fs::read(path)?;
        if bytes.len() < 16 || &bytes[..4] != b"RSEP" {
            return Err(Error::Format(format!(
                "{} is not an encoder parameter dump",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != 1 {
            return Err(Error::UnsupportedVersion { found: version, supported: 1 });
        }
        let payload = &bytes[8..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        if stored != crate::dataio::fnv1a64(payload) {
            return Err(Error::ChecksumMismatch(format!("{}", path.display())));
        }
        let mut r = ByteReader::new(payload);
        let spec_text = r.str()?;
        let mut kv = BTreeMap::new();
        for line in spec_text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let spec = EncoderSpec::from_kv(&kv)?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let mut w = Matrix::zeros(rows, cols);
            for v in w.data_mut() {
                *v = r.f64()?;
            }
            let mut b = vec![0.0; cols];
            for v in &mut b {
                *v = r.f64()?;
            }
            let has_v = r.u32()? != 0;
            let v = if has_v {
                let mut m = Matrix::zeros(rows, cols);
                for x in m.data_mut() {
                    *x = r.f64()?;
                }
                Some(m)
            } else {
                None
            };
            layers.push(EncoderLayer { w, b, v });
        }
        EncoderParams::from_parts(spec, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DEFAULT_NORM_EPS;

    fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = RngState::new(seed);
        let mut pts = Matrix::zeros(n, d);
        for v in pts.data_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        PointCloud::new(pts, 0, format!("cloud-{seed}")).unwrap()
    }

    fn permuted(cloud: &PointCloud<f64>, seed: u64) -> PointCloud<f64> {
        let mut order: Vec<usize> = (0..cloud.n_points()).collect();
        RngState::new(seed).shuffle(&mut order);
        PointCloud::new(cloud.points.take_rows(&order).unwrap(), cloud.label, cloud.id.clone())
            .unwrap()
    }

    #[test]
    fn same_spec_builds_identical_parameters() {
        let spec = EncoderSpec::pointnet(3, 4, NormKind::Instance, 42).unwrap();
        let a: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let b: EncoderParams<f64> = build_encoder(&spec).unwrap();
        assert_eq!(a, b);
        let other = EncoderSpec::pointnet(3, 4, NormKind::Instance, 43).unwrap();
        let c: EncoderParams<f64> = build_encoder(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pointnet_depth4_shape_chain() {
        let spec = EncoderSpec::pointnet(3, 4, NormKind::Batch, 1).unwrap();
        let p: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let shapes: Vec<(usize, usize)> =
            p.layers().iter().map(|l| (l.w.rows(), l.w.cols())).collect();
        assert_eq!(shapes, vec![(3, 64), (64, 64), (64, 128), (128, 1024)]);
    }

    #[test]
    fn depth_table_contract() {
        for k in 1..=5 {
            let widths = pointnet_depth_widths(k).unwrap();
            assert_eq!(widths.len(), k);
            assert_eq!(*widths.last().unwrap(), EMBED_DIM);
        }
        assert!(pointnet_depth_widths(0).is_err());
        assert!(pointnet_depth_widths(6).is_err());
    }

    #[test]
    fn width_chain_must_end_in_embed_dim() {
        let mut spec = EncoderSpec::lin_set(2, 0).unwrap();
        spec.widths = vec![64, 128, 512];
        assert!(matches!(spec.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn all_families_are_exactly_permutation_invariant() {
        let cloud = random_cloud(50, 3, 7);
        let pi = permuted(&cloud, 8);
        for family in EncoderFamily::ALL {
            let spec = EncoderSpec::family_default(family, 3, 9).unwrap();
            let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
            let e = params.embed_cloud(&cloud).unwrap();
            let ep = params.embed_cloud(&pi).unwrap();
            assert_eq!(e.values, ep.values, "{family} broke invariance");
        }
    }

    #[test]
    fn batch_norm_is_invariant_to_within_cloud_permutation() {
        // Permute the points of one cloud inside a BN batch: every cloud's
        // embedding must stay bit-identical (order-canonical statistics).
        let spec = EncoderSpec::pointnet(3, 2, NormKind::Batch, 5).unwrap();
        let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let a = random_cloud(30, 3, 1);
        let b = random_cloud(40, 3, 2);
        let ap = permuted(&a, 3);
        let e1 = params.embed_batch(&[&a, &b]).unwrap();
        let e2 = params.embed_batch(&[&ap, &b]).unwrap();
        assert_eq!(e1[0].values, e2[0].values);
        assert_eq!(e1[1].values, e2[1].values);
    }

    #[test]
    fn injected_identity_linsetnn_embeds_componentwise_max() {
        // 1-block LinSet-NN, W = identity padded with zeros, b = 0:
        // embedding = componentwise max = [1, 1, 0, ..., 0].
        let spec = EncoderSpec {
            family: EncoderFamily::LinSetNn,
            input_dim: 2,
            widths: vec![EMBED_DIM],
            norm: NormKind::None,
            norm_eps: DEFAULT_NORM_EPS,
            n_mlp_blocks: 1,
            init: InitKind::Glorot,
            seed: 0,
        };
        let mut w = Matrix::zeros(2, EMBED_DIM);
        w.set(0, 0, 1.0);
        w.set(1, 1, 1.0);
        let params =
            EncoderParams::from_parts(spec, vec![EncoderLayer { w, b: vec![0.0; EMBED_DIM], v: None }])
                .unwrap();
        let cloud = PointCloud::new(
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            0,
            "inject".into(),
        )
        .unwrap();
        let e = params.embed_cloud(&cloud).unwrap();
        assert_eq!(e.values[0], 1.0);
        assert_eq!(e.values[1], 1.0);
        assert!(e.values[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deepsets_layer_matches_direct_formula() {
        // Single DeepSets block with injected weights against a hand-rolled
        // relu(X·W + 1·maxpool(X)·V + b), then maxpool.
        let spec = EncoderSpec {
            family: EncoderFamily::DeepSets,
            input_dim: 2,
            widths: vec![EMBED_DIM],
            norm: NormKind::None,
            norm_eps: DEFAULT_NORM_EPS,
            n_mlp_blocks: 1,
            init: InitKind::Glorot,
            seed: 0,
        };
        let mut rng = RngState::new(33);
        let mut w = Matrix::zeros(2, EMBED_DIM);
        let mut v = Matrix::zeros(2, EMBED_DIM);
        for x in w.data_mut() {
            *x = rng.uniform(-1.0, 1.0);
        }
        for x in v.data_mut() {
            *x = rng.uniform(-1.0, 1.0);
        }
        let b: Vec<f64> = (0..EMBED_DIM).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let params = EncoderParams::from_parts(
            spec,
            vec![EncoderLayer { w: w.clone(), b: b.clone(), v: Some(v.clone()) }],
        )
        .unwrap();
        let cloud = random_cloud(5, 2, 44);
        let e = params.embed_cloud(&cloud).unwrap();

        let x = &cloud.points;
        let pool: Vec<f64> = (0..2)
            .map(|c| (0..5).map(|r| x.get(r, c)).fold(f64::MIN, f64::max))
            .collect();
        for j in 0..EMBED_DIM {
            let mut best = f64::MIN;
            for r in 0..5 {
                let mut z = b[j];
                for k in 0..2 {
                    z += x.get(r, k) * w.get(k, j) + pool[k] * v.get(k, j);
                }
                best = best.max(z.max(0.0));
            }
            assert!((e.values[j] - best).abs() < 1e-12, "channel {j}");
        }
    }

    #[test]
    fn linsetnn_scales_linearly_with_input() {
        // Zero biases make LinSet-NN positively homogeneous; scaling by a
        // power of two is even bit-exact.
        let spec = EncoderSpec::lin_set_nn(3, 21).unwrap();
        let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let cloud = random_cloud(20, 3, 22);
        let mut doubled = cloud.clone();
        doubled.points.scale(2.0);
        let e = params.embed_cloud(&cloud).unwrap();
        let e2 = params.embed_cloud(&doubled).unwrap();
        for (a, b) in e.values.iter().zip(&e2.values) {
            assert_eq!(2.0 * a, *b);
        }
        let mut scaled = cloud.clone();
        scaled.points.scale(1.7);
        let es = params.embed_cloud(&scaled).unwrap();
        for (a, b) in e.values.iter().zip(&es.values) {
            assert!((1.7 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn instance_norm_embedding_independent_of_batch() {
        let spec = EncoderSpec::pointnet(2, 3, NormKind::Instance, 6).unwrap();
        let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let clouds: Vec<PointCloud<f64>> =
            (0..8).map(|i| random_cloud(25, 2, 100 + i)).collect();
        let alone = params.embed_cloud(&clouds[3]).unwrap();
        let refs: Vec<&PointCloud<f64>> = clouds.iter().collect();
        let batched = params.embed_batch(&refs).unwrap();
        assert_eq!(alone.values, batched[3].values);
    }

    #[test]
    fn bn_requires_a_real_batch() {
        let spec = EncoderSpec::pointnet(2, 2, NormKind::Batch, 6).unwrap();
        let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let cloud = random_cloud(10, 2, 1);
        assert!(matches!(
            params.embed_cloud(&cloud),
            Err(Error::DegenerateStats(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = EncoderSpec::lin_set(3, 0).unwrap();
        let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let cloud2d = random_cloud(10, 2, 1);
        assert!(matches!(
            params.embed_cloud(&cloud2d),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn kv_round_trip() {
        let spec = EncoderSpec::pointnet(2, 5, NormKind::Layer, 987).unwrap();
        let text = spec.to_kv();
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let back = EncoderSpec::from_kv(&kv).unwrap();
        assert_eq!(spec, back);
        // Unknown keys are rejected.
        kv.insert("bogus".into(), "1".into());
        assert!(EncoderSpec::from_kv(&kv).is_err());
    }

    #[test]
    fn params_binary_round_trip() {
        let spec = EncoderSpec::deep_sets(3, 77).unwrap();
        let params: EncoderParams<f64> = build_encoder(&spec).unwrap();
        let mut path = std::env::temp_dir();
        path.push(format!("randset-params-{}.rsep", std::process::id()));
        params.write_binary(&path).unwrap();
        let back = EncoderParams::read_binary(&path).unwrap();
        assert_eq!(params, back);
        std::fs::remove_file(&path).ok();
    }
}
