use crate::error::{Error, Result};

use super::Tensor;

/// Constant sparse matrix in CSR form, used as a fixed linear operator
/// (row-normalized adjacency, sampled-block averaging).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(col, weight)` entries.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for row in &rows {
            for &(c, w) in row {
                if c >= cols {
                    return Err(Error::dim(format!("column {} out of range {}", c, cols)));
                }
                indices.push(c);
                weights.push(w);
            }
            offsets.push(indices.len());
        }
        Ok(SparseMatrix {
            rows: rows.len(),
            cols,
            offsets,
            indices,
            weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[r]..self.offsets[r + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// `self · x` for a dense `x` with `self.cols()` rows.
    pub fn matmul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.cols {
            return Err(Error::dim(format!(
                "sparse operator has {} columns, input has {} rows",
                self.cols,
                x.rows()
            )));
        }
        let d = x.cols();
        let mut out = vec![0.0; self.rows * d];
        self.apply(x.values(), d, &mut out);
        Tensor::matrix(self.rows, d, out)
    }

    pub(crate) fn apply(&self, x: &[f64], d: usize, out: &mut [f64]) {
        for r in 0..self.rows {
            let dst = &mut out[r * d..(r + 1) * d];
            for (c, w) in self.row_entries(r) {
                for (o, &v) in dst.iter_mut().zip(&x[c * d..(c + 1) * d]) {
                    *o += w * v;
                }
            }
        }
    }

    /// Accumulates `selfᵀ · dy` into `dx`.
    pub(crate) fn apply_transpose(&self, dy: &[f64], d: usize, dx: &mut [f64]) {
        for r in 0..self.rows {
            let g = &dy[r * d..(r + 1) * d];
            for (c, w) in self.row_entries(r) {
                for (o, &v) in dx[c * d..(c + 1) * d].iter_mut().zip(g) {
                    *o += w * v;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(vec![self.rows, self.cols]);
        for r in 0..self.rows {
            for (c, w) in self.row_entries(r) {
                t.values_mut()[r * self.cols + c] += w;
            }
        }
        t
    }
}
