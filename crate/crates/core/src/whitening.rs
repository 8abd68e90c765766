//! Fitting and applying the Whitening-k transform.
//!
//! Given row vectors `x_1..x_N` with mean `μ` and biased covariance
//! `Σ = 1/N Σ (x_i - μ)ᵀ(x_i - μ)`, the transform is `x̃ = (x - μ) W` with
//! `W = U Λ^{-1/2}` taken from the eigendecomposition `Σ = U Λ Uᵀ`. Then
//! `Wᵀ Σ W = I`: the transformed set has zero mean and identity covariance.
//!
//! Eigenvalues are sorted descending, so keeping the first `k` columns of `W`
//! keeps the `k` highest-variance directions. That truncation is PCA followed
//! by per-component rescaling to unit variance.
//!
//! Eigenvalues at or below `eps` (numerically zero variance) have no usable
//! inverse square root; the count of eigenvalues above `eps` is the numerical
//! rank `r`, and `k` may not exceed it.

use std::fmt;
use std::str::FromStr;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_diag, sym_eig, SymmetricMatrix};

/// Relative rank tolerance: the default `eps` is this times `trace(Σ) / d`.
pub const DEFAULT_EPS_SCALE: f64 = 1e-12;

/// How many output dimensions to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    /// Every direction above the rank tolerance.
    All,
    /// The `k` highest-variance directions.
    Top(usize),
}

impl FromStr for Components {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(Components::All);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("k must be at least 1".to_string()),
            Ok(k) => Ok(Components::Top(k)),
            Err(_) => Err(format!(
                "expected a positive integer or \"full\", got {s:?}"
            )),
        }
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Components::All => f.write_str("full"),
            Components::Top(k) => write!(f, "{k}"),
        }
    }
}

/// Column-wise arithmetic mean.
pub fn compute_mean(data: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyInput("mean of zero rows"));
    }
    let mut sum = vec![0.0; data.dim()];
    for row in data.rows() {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = data.count() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Biased (divide-by-N) covariance around `mean`.
pub fn compute_covariance(data: &EmbeddingMatrix, mean: &[f64]) -> Result<SymmetricMatrix> {
    let d = data.dim();
    if mean.len() != d {
        return Err(Error::dims(d, mean.len()));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("covariance of zero rows"));
    }
    let mut acc = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for row in data.rows() {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let acc_row = &mut acc[i * d..(i + 1) * d];
            for j in i..d {
                acc_row[j] += ci * centered[j];
            }
        }
    }
    let n = data.count() as f64;
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / n;
            acc[i * d + j] = v;
            acc[j * d + i] = v;
        }
    }
    Ok(SymmetricMatrix::from_symmetric_entries(d, acc))
}

/// A fitted transform `x ↦ (x - mean) W`, with `W` stored row-major as
/// `input_dim x output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    mean: Vec<f64>,
    matrix: Vec<f64>,
    input_dim: usize,
    output_dim: usize,
    fit_count: u64,
    eps: f64,
}

impl WhiteningTransform {
    /// Fits the transform on `data` (Whitening-k).
    ///
    /// `eps` defaults to `1e-12 * trace(Σ) / d`. Requesting more components
    /// than the numerical rank is an error that reports the rank.
    pub fn fit(data: &EmbeddingMatrix, components: Components, eps: Option<f64>) -> Result<Self> {
        let mean = compute_mean(data)?;
        let cov = compute_covariance(data, &mean)?;
        Self::fit_moments(mean, &cov, data.count() as u64, components, eps)
    }

    /// Fits from precomputed moments, e.g. the output of
    /// [`MomentState::finalize`](crate::streaming::MomentState::finalize).
    pub fn fit_moments(
        mean: Vec<f64>,
        covariance: &SymmetricMatrix,
        fit_count: u64,
        components: Components,
        eps: Option<f64>,
    ) -> Result<Self> {
        let d = covariance.dim();
        if mean.len() != d {
            return Err(Error::dims(d, mean.len()));
        }
        if fit_count == 0 {
            return Err(Error::EmptyInput("fit on zero rows"));
        }
        if let Components::Top(k) = components {
            if k == 0 || k > d {
                return Err(Error::InvalidK {
                    requested: k,
                    dim: d,
                });
            }
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean"));
        }
        let eps = eps.unwrap_or(DEFAULT_EPS_SCALE * covariance.trace() / d as f64);

        let eig = sym_eig(covariance)?;
        let (scales, rank) = inv_sqrt_diag(&eig.eigenvalues, eps);
        let k = match components {
            Components::All if rank == 0 => {
                return Err(Error::RankDeficient { requested: 1, rank })
            }
            Components::All => rank,
            Components::Top(k) if k > rank => {
                return Err(Error::RankDeficient { requested: k, rank })
            }
            Components::Top(k) => k,
        };

        let mut matrix = Vec::with_capacity(d * rank);
        for i in 0..d {
            for (j, s) in scales.iter().enumerate() {
                matrix.push(eig.vector_entry(i, j) * s);
            }
        }
        let full = Self {
            mean,
            matrix,
            input_dim: d,
            output_dim: rank,
            fit_count,
            eps,
        };
        full.truncate(k)
    }

    /// Assembles a transform from stored parts, validating shapes and
    /// finiteness.
    pub fn from_parts(
        mean: Vec<f64>,
        matrix: Vec<f64>,
        output_dim: usize,
        fit_count: u64,
        eps: f64,
    ) -> Result<Self> {
        let input_dim = mean.len();
        if input_dim == 0 {
            return Err(Error::EmptyInput("transform input dimension"));
        }
        if output_dim == 0 || output_dim > input_dim {
            return Err(Error::InvalidK {
                requested: output_dim,
                dim: input_dim,
            });
        }
        if matrix.len() != input_dim * output_dim {
            return Err(Error::dims(input_dim * output_dim, matrix.len()));
        }
        if mean.iter().chain(&matrix).any(|v| !v.is_finite()) || !eps.is_finite() {
            return Err(Error::NonFinite("transform"));
        }
        Ok(Self {
            mean,
            matrix,
            input_dim,
            output_dim,
            fit_count,
            eps,
        })
    }

    /// Keeps the first `k` columns of `W`.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.output_dim {
            return Err(Error::InvalidK {
                requested: k,
                dim: self.output_dim,
            });
        }
        let matrix = if k == self.output_dim {
            self.matrix.clone()
        } else {
            self.matrix
                .chunks_exact(self.output_dim)
                .flat_map(|row| &row[..k])
                .copied()
                .collect()
        };
        Ok(Self {
            mean: self.mean.clone(),
            matrix,
            input_dim: self.input_dim,
            output_dim: k,
            fit_count: self.fit_count,
            eps: self.eps,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `W`, row-major `input_dim x output_dim`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Row `i` of `W`.
    pub fn matrix_row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// Column `j` of `W`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.input_dim)
            .map(|i| self.matrix[i * self.output_dim + j])
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Number of vectors the transform was fitted on.
    pub fn fit_count(&self) -> u64 {
        self.fit_count
    }

    /// Eigenvalue threshold used when fitting.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `(x - mean) W`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::dims(self.input_dim, x.len()));
        }
        let mut out = vec![0.0; self.output_dim];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, (xi, mi)) in x.iter().zip(&self.mean).enumerate() {
            let c = xi - mi;
            for (o, w) in out.iter_mut().zip(self.matrix_row(i)) {
                *o += c * w;
            }
        }
    }

    /// Applies the transform to every row.
    pub fn apply_batch(&self, data: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.apply_batch_threads(data, 1)
    }

    /// Row-parallel [`apply_batch`](Self::apply_batch); the output does not
    /// depend on `threads`.
    pub fn apply_batch_threads(
        &self,
        data: &EmbeddingMatrix,
        threads: usize,
    ) -> Result<EmbeddingMatrix> {
        if data.dim() != self.input_dim {
            return Err(Error::dims(self.input_dim, data.dim()));
        }
        let k = self.output_dim;
        let mut out = vec![0.0; data.count() * k];
        let threads = threads.max(1).min(data.count().max(1));
        if threads == 1 {
            for (row, dst) in data.rows().zip(out.chunks_exact_mut(k)) {
                self.apply_into(row, dst);
            }
        } else {
            let rows_per = data.count().div_ceil(threads);
            std::thread::scope(|scope| {
                for (chunk_idx, dst) in out.chunks_mut(rows_per * k).enumerate() {
                    let first = chunk_idx * rows_per;
                    scope.spawn(move || {
                        for (r, o) in dst.chunks_exact_mut(k).enumerate() {
                            self.apply_into(data.row(first + r), o);
                        }
                    });
                }
            });
        }
        EmbeddingMatrix::new(data.count(), k, out)
    }
}
