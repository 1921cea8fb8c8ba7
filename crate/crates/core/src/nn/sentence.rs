use super::Mat;
use crate::{Error, Result};

/// The `d x m` matrix of word vectors for one sentence.
///
/// Stored token-major so that each column (one word vector) is a contiguous
/// slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SentenceMatrix {
    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("zero-dimensional word vectors".into()));
        }
        let mut data = Vec::with_capacity(dim * columns.len());
        for c in columns {
            if c.len() != dim {
                return Err(Error::Shape(format!(
                    "word vector of length {} in a {dim}-dimensional sentence",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(SentenceMatrix { dim, data })
    }

    pub(crate) fn from_token_major(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && data.len() % dim == 0);
        SentenceMatrix { dim, data }
    }

    /// Word-vector dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sentence length `m`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Dense `d x m` view.
    pub fn to_mat(&self) -> Mat {
        Mat::from_fn(self.dim, self.len(), |r, c| self.column(c)[r])
    }

    /// `W · k`: the weight-combined word vector.
    pub fn weighted_sum(&self, k: &[f64]) -> Result<Vec<f64>> {
        if k.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} weights for a sentence of {} words",
                k.len(),
                self.len()
            )));
        }
        let mut s = vec![0.0; self.dim];
        for (col, &w) in self.columns().zip(k) {
            super::axpy(w, col, &mut s);
        }
        Ok(s)
    }

    pub fn column_mean(&self) -> Vec<f64> {
        let m = self.len() as f64;
        let mut s = vec![0.0; self.dim];
        for col in self.columns() {
            super::axpy(1.0 / m, col, &mut s);
        }
        s
    }
}
