//! Dense symmetric linear algebra.
//!
//! The only decomposition the crate needs is the eigendecomposition of a
//! covariance matrix, which is symmetric positive semi-definite. For such a
//! matrix the SVD and the eigendecomposition coincide, so a cyclic Jacobi
//! solver is used: it is short, unconditionally convergent on symmetric input
//! and accurate for small eigenvalues.

use crate::error::{Error, Result};

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Convergence target: off-diagonal Frobenius norm relative to the input's.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Negative eigenvalues no smaller than `-CLAMP_TOL * max|a_ij|` are round-off
/// and are reported as exactly zero.
pub const CLAMP_TOL: f64 = 1e-10;

/// A `dim x dim` real symmetric matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds a symmetric matrix from row-major entries, replacing `A` by
    /// `(A + Aᵀ) / 2` so the stored entries are exactly symmetric.
    pub fn new(dim: usize, mut entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput("symmetric matrix dimension"));
        }
        if entries.len() != dim * dim {
            return Err(Error::dims(dim * dim, entries.len()));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (entries[i * dim + j] + entries[j * dim + i]);
                entries[i * dim + j] = avg;
                entries[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, entries })
    }

    /// Builds a matrix from nested rows, e.g. `&[[2.0, 1.0], [1.0, 2.0]]`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::dims(dim, row.len()));
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(dim, vec![0.0; dim * dim])
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        Ok(m)
    }

    /// Wraps entries the caller has already made exactly symmetric.
    pub(crate) fn from_symmetric_entries(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        debug_assert!((0..dim).all(|i| (0..dim).all(|j| {
            entries[i * dim + j].to_bits() == entries[j * dim + i].to_bits()
                || (entries[i * dim + j].is_nan() && entries[j * dim + i].is_nan())
        })));
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &SymmetricMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Eigenpairs of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order. Column `j` of the row-major
/// `eigenvectors` matrix is the unit eigenvector for `eigenvalues[j]`, with
/// its largest-magnitude entry made non-negative so results are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Entry `i` of eigenvector `j`.
    #[inline]
    pub fn vector_entry(&self, i: usize, j: usize) -> f64 {
        self.eigenvectors[i * self.dim() + j]
    }

    /// Copies out eigenvector `j`.
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.vector_entry(i, j)).collect()
    }

    /// `U Λ Uᵀ`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v: f64 = (0..d)
                    .map(|m| {
                        self.vector_entry(i, m) * self.eigenvalues[m] * self.vector_entry(j, m)
                    })
                    .sum();
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        SymmetricMatrix::from_symmetric_entries(d, out)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if a.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let n = a.dim;
    let mut m = a.entries.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let target = OFF_DIAGONAL_TOL * a.frobenius_norm();
    let mut sweep = 0;
    loop {
        let off = off_diagonal_norm(&m, n);
        if off <= target {
            break;
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps: MAX_SWEEPS,
                off_norm: off,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, n, p, q, sweep);
            }
        }
        sweep += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));

    let floor = -CLAMP_TOL * a.max_abs();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        let lambda = m[src * n + src];
        eigenvalues.push(if lambda < 0.0 && lambda >= floor {
            0.0
        } else {
            lambda
        });

        let mut pivot = 0;
        for i in 1..n {
            if v[i * n + src].abs() > v[pivot * n + src].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[i * n + col] = sign * v[i * n + src];
        }
    }

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            sum += m[p * n + q] * m[p * n + q];
        }
    }
    (2.0 * sum).sqrt()
}

/// One Jacobi rotation annihilating `m[p][q]`, accumulated into `v`.
fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize, sweep: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let g = 100.0 * apq.abs();
    // Late in the iteration an entry this small can no longer move either
    // diagonal element, so it is dropped instead of rotated.
    if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
        m[p * n + q] = 0.0;
        m[q * n + p] = 0.0;
        return;
    }

    let h = aqq - app;
    let t = if h.abs() + g == h.abs() {
        apq / h
    } else {
        let theta = 0.5 * h / apq;
        let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = m[r * n + p];
        let arq = m[r * n + q];
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        m[r * n + p] = new_rp;
        m[p * n + r] = new_rp;
        m[r * n + q] = new_rq;
        m[q * n + r] = new_rq;
    }
    for r in 0..n {
        let vrp = v[r * n + p];
        let vrq = v[r * n + q];
        v[r * n + p] = vrp - s * (vrq + tau * vrp);
        v[r * n + q] = vrq + s * (vrp - tau * vrq);
    }
}

/// Inverse square roots of the eigenvalues above `eps`.
///
/// Eigenvalues must be sorted descending; the retained entries form a prefix
/// whose length is the numerical rank, returned as the second element.
pub fn inv_sqrt_diag(eigenvalues: &[f64], eps: f64) -> (Vec<f64>, usize) {
    let scaled: Vec<f64> = eigenvalues
        .iter()
        .take_while(|&&lambda| lambda > eps)
        .map(|&lambda| 1.0 / lambda.sqrt())
        .collect();
    let rank = scaled.len();
    (scaled, rank)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
