//! Incremental mean and covariance in `Θ(d²)` memory, independent of the
//! number of vectors seen.
//!
//! The textbook running-average recurrences are
//!
//! ```text
//! μ_{n+1} = n/(n+1) μ_n + 1/(n+1) x_{n+1}
//! Σ_{n+1} = n/(n+1) Σ_n + 1/(n+1) (x_{n+1} - μ)ᵀ(x_{n+1} - μ)
//! ```
//!
//! The mean recurrence is exact. The covariance one is not for any single
//! choice of `μ`: with `μ = μ_n` it overstates each new term by a factor
//! `(n+1)/n`, and with `μ = μ_{n+1}` it understates it by `n/(n+1)`. The
//! exact update uses both:
//!
//! ```text
//! S_{n+1} = S_n + (x_{n+1} - μ_n)ᵀ(x_{n+1} - μ_{n+1}),    Σ_n = S_n / n
//! ```
//!
//! which is what [`MomentState::update`] implements, keeping the unscaled
//! scatter `S`. Two partial states combine exactly as well (Chan et al.),
//! so a stream can be sharded, accumulated per shard and merged.

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// Running count, mean and scatter (sum of centered outer products).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentState {
    count: u64,
    dim: usize,
    mean: Vec<f64>,
    // Row-major d x d, kept exactly symmetric.
    scatter: Vec<f64>,
}

impl MomentState {
    /// An empty state; the dimension is fixed by the first update.
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty state with a fixed dimension.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            count: 0,
            dim,
            mean: vec![0.0; dim],
            scatter: vec![0.0; dim * dim],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Dimension, or 0 while it is still unset.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unscaled scatter matrix, row-major.
    pub fn scatter(&self) -> &[f64] {
        &self.scatter
    }

    /// Folds one vector into the state.
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if x.is_empty() {
            return Err(Error::EmptyInput("zero-length vector"));
        }
        if self.dim == 0 {
            *self = Self::with_dim(x.len());
        } else if x.len() != self.dim {
            return Err(Error::dims(self.dim, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("streamed vector"));
        }

        let d = self.dim;
        self.count += 1;
        let n = self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for (m, b) in self.mean.iter_mut().zip(&before) {
            *m += b / n;
        }
        let after: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        // (b_i a_j + b_j a_i) / 2 is the symmetric form of b ⊗ a; b ∥ a exactly
        // in real arithmetic, so this only removes rounding asymmetry.
        for i in 0..d {
            for j in i..d {
                let v = 0.5 * (before[i] * after[j] + before[j] * after[i]);
                self.scatter[i * d + j] += v;
                if i != j {
                    self.scatter[j * d + i] += v;
                }
            }
        }
        Ok(())
    }

    /// Folds every vector of an iterator into the state.
    pub fn extend<'a, I>(&mut self, rows: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        for row in rows {
            self.update(row)?;
        }
        Ok(())
    }

    /// Combines two states as if `other`'s vectors had been streamed after
    /// `self`'s.
    pub fn merge(&self, other: &MomentState) -> Result<MomentState> {
        if other.count == 0 {
            if self.dim != 0 && other.dim != 0 && self.dim != other.dim {
                return Err(Error::dims(self.dim, other.dim));
            }
            return Ok(self.clone());
        }
        if self.count == 0 {
            if self.dim != 0 && self.dim != other.dim {
                return Err(Error::dims(self.dim, other.dim));
            }
            return Ok(other.clone());
        }
        if self.dim != other.dim {
            return Err(Error::dims(self.dim, other.dim));
        }

        let d = self.dim;
        let (na, nb) = (self.count as f64, other.count as f64);
        let count = self.count + other.count;
        let n = count as f64;
        let delta: Vec<f64> = other
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(b, a)| b - a)
            .collect();
        let mean = self
            .mean
            .iter()
            .zip(&delta)
            .map(|(a, dl)| a + dl * (nb / n))
            .collect();
        let weight = na * nb / n;
        let mut scatter = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = self.scatter[i * d + j]
                    + other.scatter[i * d + j]
                    + delta[i] * delta[j] * weight;
                scatter[i * d + j] = v;
                scatter[j * d + i] = v;
            }
        }
        Ok(MomentState {
            count,
            dim: d,
            mean,
            scatter,
        })
    }

    /// Mean and biased covariance (`scatter / count`).
    pub fn finalize(&self) -> Result<(Vec<f64>, SymmetricMatrix)> {
        if self.count == 0 {
            return Err(Error::EmptyInput("finalize on an empty stream"));
        }
        let n = self.count as f64;
        let cov = self.scatter.iter().map(|s| s / n).collect();
        Ok((
            self.mean.clone(),
            SymmetricMatrix::from_symmetric_entries(self.dim, cov),
        ))
    }
}
