use crate::error::{Error, Result};

/// `count` row vectors of dimension `dim`, stored row-major in 64-bit floats.
///
/// Every entry is finite. `count` may be zero (an empty batch); operations
/// that need data reject that case themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    count: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput("embedding dimension"));
        }
        if data.len() != count * dim {
            return Err(Error::dims(count * dim, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(Self { count, dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput("no rows to infer the dimension from"));
        };
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::dims(dim, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    /// A matrix with no rows.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new())
    }

    /// Row-wise concatenation of `self` and `other`.
    pub fn stack(&self, other: &EmbeddingMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::dims(self.dim, other.dim));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            count: self.count + other.count,
            dim: self.dim,
            data,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}
