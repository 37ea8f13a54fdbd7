//! Untrained set-function encoders for point clouds, plus everything needed to
//! evaluate them: linear / small-MLP probes trained on frozen embeddings,
//! K-Means++ clustering with adjusted mutual information, an exact t-SNE, and
//! an MLP decoder trained with a Chamfer loss.
//!
//! The encoders (`LinSet-NN`, `LinSet`, `PointNet`, `DeepSets`) are built from
//! per-point linear maps, optional normalization layers, and a channel-wise
//! max-pool, with weights drawn once from a seeded generator and never
//! trained. Everything downstream treats the resulting 1024-dim embeddings as
//! fixed inputs.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the crate root
//! exports `f64` aliases for the common types, and all on-disk formats store
//! f64 little-endian. Every operation that draws randomness takes either a
//! seed or an explicit [`rng::RngState`], so whole experiment pipelines replay
//! bit-for-bit.

pub mod analysis;
pub mod dataio;
pub mod decoder;
pub mod embedding;
pub mod encoders;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod probes;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense matrix over `f64`, the default precision for experiments.
pub type Matrix = matrix::Matrix<f64>;
/// A point cloud over `f64`.
pub type PointCloud = dataio::PointCloud<f64>;
/// A labeled point-cloud dataset over `f64`.
pub type Dataset = dataio::Dataset<f64>;
/// An instantiated encoder over `f64`.
pub type EncoderParams = encoders::EncoderParams<f64>;
/// Embeddings of a whole dataset over `f64`.
pub type EmbeddingMatrix = embedding::EmbeddingMatrix<f64>;
/// A probe classifier over `f64`.
pub type ProbeModel = probes::ProbeModel<f64>;
/// A Chamfer-trained decoder over `f64`.
pub type DecoderModel = decoder::DecoderModel<f64>;
