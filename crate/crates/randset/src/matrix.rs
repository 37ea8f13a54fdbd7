//! Dense row-major matrices and the handful of BLAS-ish kernels the crate
//! needs. Row-major because every pipeline stage treats rows as items
//! (points, embeddings, batch samples) and columns as channels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Above this many multiply-adds, `matmul` splits output rows across the
/// rayon pool. Row-parallelism keeps results bit-identical to the serial
/// kernel because each output row is still computed by one thread in the
/// same order.
const PAR_FLOP_THRESHOLD: usize = 1 << 22;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    /// Takes ownership of row-major `data`; its length must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::ShapeMismatch(format!(
                    "row 0 has {ncols} columns but row {i} has {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols: ncols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Rows iterator.
    pub fn iter_rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// Stacks matrices vertically; all must share the column count.
    pub fn vstack(parts: &[&Matrix<S>]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::EmptyInput("vstack of no matrices".into()));
        };
        let cols = first.cols;
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for (i, m) in parts.iter().enumerate() {
            if m.cols != cols {
                return Err(Error::ShapeMismatch(format!(
                    "vstack: part 0 has {cols} columns but part {i} has {}",
                    m.cols
                )));
            }
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Copies rows `lo..hi` into a new matrix.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || hi > self.rows {
            return Err(Error::InvalidArgument(format!(
                "row range {lo}..{hi} out of bounds for {} rows",
                self.rows
            )));
        }
        Ok(Matrix {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        })
    }

    /// Gathers the given rows (with repetition allowed) into a new matrix.
    pub fn take_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidArgument(format!(
                    "row index {i} out of bounds for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Matrix { rows: indices.len(), cols: self.cols, data })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix<S>) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul of {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        let flops = self.rows * self.cols * rhs.cols;
        if flops >= PAR_FLOP_THRESHOLD && self.rows > 1 {
            out.data
                .par_chunks_mut(rhs.cols)
                .zip(self.data.par_chunks(self.cols))
                .for_each(|(out_row, lhs_row)| {
                    matmul_row(lhs_row, rhs, out_row);
                });
        } else {
            for (out_row, lhs_row) in
                out.data.chunks_mut(rhs.cols).zip(self.data.chunks(self.cols))
            {
                matmul_row(lhs_row, rhs, out_row);
            }
        }
        Ok(out)
    }

    /// Applies `f` to every entry, in place.
    pub fn map_inplace(&mut self, mut f: impl FnMut(S) -> S) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Element-wise `self += rhs`.
    pub fn add_assign(&mut self, rhs: &Matrix<S>) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::ShapeMismatch(format!(
                "add of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    /// Multiplies every entry by `k`.
    pub fn scale(&mut self, k: S) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    /// Adds `row` to every row of `self`.
    pub fn add_row_broadcast(&mut self, row: &[S]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "broadcast row of len {} onto {} columns",
                row.len(),
                self.cols
            )));
        }
        for r in self.data.chunks_mut(self.cols) {
            for (a, &b) in r.iter_mut().zip(row) {
                *a += b;
            }
        }
        Ok(())
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry-wise difference; shapes must match.
    pub fn max_abs_diff(&self, rhs: &Matrix<S>) -> Result<S> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::ShapeMismatch(format!(
                "diff of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut worst = S::zero();
        for (&a, &b) in self.data.iter().zip(&rhs.data) {
            let d = (a - b).abs();
            if d > worst {
                worst = d;
            }
        }
        Ok(worst)
    }

    /// Squared Euclidean distance between two rows of (possibly different)
    /// matrices with equal column counts.
    #[inline]
    pub fn sq_dist_rows(a: &[S], b: &[S]) -> S {
        let mut acc = S::zero();
        for (&x, &y) in a.iter().zip(b) {
            let d = x - y;
            acc += d * d;
        }
        acc
    }
}

/// One output row of a matrix product: `out_row = lhs_row * rhs`, accumulated
/// k-then-j so the inner loop streams both `rhs` rows and the output.
#[inline]
fn matmul_row<S: Scalar>(lhs_row: &[S], rhs: &Matrix<S>, out_row: &mut [S]) {
    for (k, &a) in lhs_row.iter().enumerate() {
        if a == S::zero() {
            continue;
        }
        let rhs_row = rhs.row(k);
        for (o, &b) in out_row.iter_mut().zip(rhs_row) {
            *o += a * b;
        }
    }
}
