//! Embedding a whole dataset and persisting the result.
//!
//! [`embed_dataset`] runs an encoder over every cloud with deterministic
//! shuffled batching (the batch composition only influences batch-normalized
//! encoders, whose statistics couple the clouds of a batch) and returns an
//! [`EmbeddingMatrix`]: one row per item, aligned with the dataset order,
//! carrying labels and full provenance (encoder tag + seed, order seed,
//! batch size). The binary save format is checksummed and versioned.

use std::path::Path;

use rayon::prelude::*;

use crate::dataio::{fnv1a64, ByteReader, ByteWriter, Dataset};
use crate::encoders::EncoderParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::NormKind;
use crate::rng::RngState;
use crate::scalar::Scalar;

const EMBED_MAGIC: &[u8; 4] = b"RSEM";
const EMBED_VERSION: u32 = 1;

/// Embeddings for a dataset: row `i` belongs to item `i` of the source
/// dataset, regardless of how items were batched during encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<S> {
    pub values: Matrix<S>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    pub class_names: Vec<String>,
    pub dataset_name: String,
    pub encoder_tag: String,
    pub encoder_seed: u64,
    pub order_seed: u64,
    pub batch_size: usize,
}

impl<S: Scalar> EmbeddingMatrix<S> {
    pub fn n_items(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn check(&self) -> Result<()> {
        if self.labels.len() != self.values.rows() || self.ids.len() != self.values.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows vs {} labels / {} ids",
                self.values.rows(),
                self.labels.len(),
                self.ids.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside the {}-class table",
                self.class_names.len()
            )));
        }
        Ok(())
    }

    /// Rows with the given indices, in the given order.
    pub fn take(&self, indices: &[usize]) -> Result<EmbeddingMatrix<S>> {
        let values = self.values.take_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        Ok(EmbeddingMatrix {
            values,
            labels,
            ids,
            class_names: self.class_names.clone(),
            dataset_name: self.dataset_name.clone(),
            encoder_tag: self.encoder_tag.clone(),
            encoder_seed: self.encoder_seed,
            order_seed: self.order_seed,
            batch_size: self.batch_size,
        })
    }

    /// Writes the matrix to a checksummed binary file (atomic replace).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.check()?;
        let mut w = ByteWriter::new();
        w.str(&self.dataset_name);
        w.str(&self.encoder_tag);
        w.u64(self.encoder_seed);
        w.u64(self.order_seed);
        w.u64(self.batch_size as u64);
        w.u32(self.class_names.len() as u32);
        for c in &self.class_names {
            w.str(c);
        }
        w.u64(self.values.rows() as u64);
        w.u64(self.values.cols() as u64);
        for i in 0..self.values.rows() {
            w.str(&self.ids[i]);
            w.u64(self.labels[i] as u64);
            for &v in self.values.row(i) {
                w.f64(v.to_f64());
            }
        }
        let payload = w.buf;
        let mut file = Vec::with_capacity(payload.len() + 16);
        file.extend_from_slice(EMBED_MAGIC);
        file.extend_from_slice(&EMBED_VERSION.to_le_bytes());
        file.extend_from_slice(&payload);
        file.extend_from_slice(&fnv1a64(&payload).to_le_bytes());
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &file)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads a file written by [`EmbeddingMatrix::save`], verifying magic,
    /// version, and checksum.
    pub fn load(path: &Path) -> Result<EmbeddingMatrix<S>> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 16 || &bytes[..4] != EMBED_MAGIC {
            return Err(Error::Format(format!(
                "{} is not an embedding file",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != EMBED_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: EMBED_VERSION });
        }
        let payload = &bytes[8..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        if stored != fnv1a64(payload) {
            return Err(Error::ChecksumMismatch(format!("{}", path.display())));
        }
        let mut r = ByteReader::new(payload);
        let dataset_name = r.str()?;
        let encoder_tag = r.str()?;
        let encoder_seed = r.u64()?;
        let order_seed = r.u64()?;
        let batch_size = r.u64()? as usize;
        let n_classes = r.u32()? as usize;
        let mut class_names = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            class_names.push(r.str()?);
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let mut values = Matrix::zeros(rows, cols);
        let mut ids = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        for i in 0..rows {
            ids.push(r.str()?);
            labels.push(r.u64()? as usize);
            for v in values.row_mut(i) {
                *v = S::cast(r.f64()?);
            }
        }
        if !r.done() {
            return Err(Error::Format("trailing bytes after embedding records".into()));
        }
        let out = EmbeddingMatrix {
            values,
            labels,
            ids,
            class_names,
            dataset_name,
            encoder_tag,
            encoder_seed,
            order_seed,
            batch_size,
        };
        out.check()?;
        Ok(out)
    }
}

/// Splits a shuffled item order into batches. A trailing single-item batch
/// is merged into its predecessor so batch-normalized models never see a
/// 1-row batch.
pub(crate) fn batch_bounds(n_items: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut start = 0;
    while start < n_items {
        let end = (start + batch_size).min(n_items);
        bounds.push((start, end));
        start = end;
    }
    if bounds.len() >= 2 {
        let (last_lo, last_hi) = *bounds.last().unwrap();
        if last_hi - last_lo == 1 {
            bounds.pop();
            bounds.last_mut().unwrap().1 = last_hi;
        }
    }
    bounds
}

/// Embeds every cloud of a dataset. Items are shuffled with `order_seed`
/// and processed in batches of `batch_size` (batches run in parallel); the
/// rows of the result are rearranged back to dataset order. For encoders
/// without batch normalization the grouping provably does not change any
/// value; for batch-normalized encoders it fixes which clouds share
/// statistics, so the same `(order_seed, batch_size)` always reproduces the
/// same embeddings.
pub fn embed_dataset<S: Scalar>(
    params: &EncoderParams<S>,
    dataset: &Dataset<S>,
    batch_size: usize,
    order_seed: u64,
) -> Result<EmbeddingMatrix<S>> {
    if dataset.clouds.is_empty() {
        return Err(Error::EmptyInput("empty dataset".into()));
    }
    let needs_pairs = params.spec().effective_norm() == NormKind::Batch;
    if batch_size == 0 || (needs_pairs && batch_size < 2) {
        return Err(Error::InvalidArgument(format!(
            "batch_size {batch_size} too small for this encoder"
        )));
    }
    if needs_pairs && dataset.clouds.len() < 2 {
        return Err(Error::DegenerateStats(
            "batch normalization needs at least 2 clouds".into(),
        ));
    }
    let mut order: Vec<usize> = (0..dataset.clouds.len()).collect();
    RngState::new(order_seed).shuffle(&mut order);
    let bounds = batch_bounds(order.len(), batch_size);
    let batch_results: Vec<Result<Vec<(usize, Vec<S>)>>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let members = &order[lo..hi];
            let clouds: Vec<&_> = members.iter().map(|&i| &dataset.clouds[i]).collect();
            let embeddings = params.embed_batch(&clouds)?;
            Ok(members
                .iter()
                .zip(embeddings)
                .map(|(&i, e)| (i, e.values))
                .collect())
        })
        .collect();
    let dim = params.spec().widths.last().copied().unwrap_or(0);
    let mut values = Matrix::zeros(dataset.clouds.len(), dim);
    for batch in batch_results {
        for (i, row) in batch? {
            values.row_mut(i).copy_from_slice(&row);
        }
    }
    let out = EmbeddingMatrix {
        values,
        labels: dataset.clouds.iter().map(|c| c.label).collect(),
        ids: dataset.clouds.iter().map(|c| c.id.clone()).collect(),
        class_names: dataset.manifest.class_names.clone(),
        dataset_name: dataset.manifest.name.clone(),
        encoder_tag: params.spec().tag(),
        encoder_seed: params.spec().seed,
        order_seed,
        batch_size,
    };
    out.check()?;
    Ok(out)
}
