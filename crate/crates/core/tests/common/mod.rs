//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use whitevec::{EmbeddingMatrix, PairedDataset, SymmetricMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub fn random_symmetric(rng: &mut impl Rng, d: usize, scale: f64) -> SymmetricMatrix {
    let u = Uniform::new_inclusive(-scale, scale);
    let entries = (0..d * d).map(|_| u.sample(rng)).collect();
    SymmetricMatrix::new(d, entries).unwrap()
}

/// `B Bᵀ / d + shift I` for Gaussian `B`: symmetric positive (semi-)definite.
pub fn random_psd(rng: &mut impl Rng, d: usize, shift: f64) -> SymmetricMatrix {
    let b = gaussian_vec(rng, d * d);
    let mut e = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let v: f64 = (0..d).map(|m| b[i * d + m] * b[j * d + m]).sum();
            e[i * d + j] = v / d as f64 + if i == j { shift } else { 0.0 };
        }
    }
    SymmetricMatrix::new(d, e).unwrap()
}

/// Lower Cholesky factor, row-major.
pub fn cholesky(a: &SymmetricMatrix) -> Vec<f64> {
    let d = a.dim();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i * d + m] * l[j * d + m]).sum();
            if i == j {
                l[i * d + i] = (a.get(i, i) - s).sqrt();
            } else {
                l[i * d + j] = (a.get(i, j) - s) / l[j * d + j];
            }
        }
    }
    l
}

/// `n` samples of `mean + L z`, `z ~ N(0, I)`, where `L Lᵀ = cov`.
pub fn correlated_gaussian(
    rng: &mut impl Rng,
    n: usize,
    mean: &[f64],
    cov: &SymmetricMatrix,
) -> EmbeddingMatrix {
    let d = cov.dim();
    let l = cholesky(cov);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = gaussian_vec(rng, d);
        for i in 0..d {
            let v: f64 = (0..=i).map(|m| l[i * d + m] * z[m]).sum();
            data.push(mean[i] + v);
        }
    }
    EmbeddingMatrix::new(n, d, data).unwrap()
}

/// Eigenvalues of a 2x2 or 3x3 symmetric matrix as roots of its
/// characteristic polynomial, descending. Closed form, then Newton-polished.
pub fn char_poly_eigenvalues(a: &SymmetricMatrix) -> Vec<f64> {
    match a.dim() {
        2 => {
            let (p, q, r) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
            let mid = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            vec![mid + rad, mid - rad]
        }
        3 => {
            let g = |i, j| a.get(i, j);
            // det(λI - A) = λ³ + c2 λ² + c1 λ + c0
            let tr = g(0, 0) + g(1, 1) + g(2, 2);
            let minors = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) + g(0, 0) * g(2, 2)
                - g(0, 2) * g(2, 0)
                + g(1, 1) * g(2, 2)
                - g(1, 2) * g(2, 1);
            let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
            let (c2, c1, c0) = (-tr, minors, -det);

            let q = tr / 3.0;
            let off = g(0, 1).powi(2) + g(0, 2).powi(2) + g(1, 2).powi(2);
            let p2 =
                (g(0, 0) - q).powi(2) + (g(1, 1) - q).powi(2) + (g(2, 2) - q).powi(2) + 2.0 * off;
            if p2 == 0.0 {
                return vec![q; 3];
            }
            let p = (p2 / 6.0).sqrt();
            let b = |i: usize, j: usize| (g(i, j) - if i == j { q } else { 0.0 }) / p;
            let det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
                - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
                + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
            let phi = (0.5 * det_b).clamp(-1.0, 1.0).acos() / 3.0;
            let l1 = q + 2.0 * p * phi.cos();
            let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let l2 = 3.0 * q - l1 - l3;
            let mut roots = vec![l1, l2, l3];
            for r in roots.iter_mut() {
                for _ in 0..3 {
                    let f = ((*r + c2) * *r + c1) * *r + c0;
                    let df = (3.0 * *r + 2.0 * c2) * *r + c1;
                    if df.abs() < 1e-8 {
                        break;
                    }
                    let step = f / df;
                    if !step.is_finite() || step.abs() > 1e-6 * (1.0 + r.abs()) {
                        break;
                    }
                    *r -= step;
                }
            }
            roots.sort_by(|x, y| y.total_cmp(x));
            roots
        }
        d => panic!("closed-form oracle only covers 2x2 and 3x3, got {d}"),
    }
}

/// Spearman by definition: O(n²) average ranks, then Pearson.
pub fn brute_force_spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Max-norm distance between two equally long slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Empirical mean and biased covariance by two-pass summation, kept
/// separate from the library's accumulation order.
pub fn naive_moments(data: &EmbeddingMatrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (data.count(), data.dim());
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| data.row(i)[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            cov[a * d + b] = (0..n)
                .map(|i| (data.row(i)[a] - mean[a]) * (data.row(i)[b] - mean[b]))
                .sum::<f64>()
                / n as f64;
        }
    }
    (mean, cov)
}

/// Pairs drawn from a latent similarity model and pushed through an
/// anisotropic embedding map.
///
/// Latent codes live in `R^latent` with identity covariance. Each pair is
/// `(a, s a + sqrt(1 - s²) e)` with `s ~ U(0, 1)` and gold score `5 s`. The
/// observed vectors are `offset + A z + noise`, where `A`'s columns have
/// geometrically decaying scales (condition number `condition`) and the
/// offset dwarfs the spread, so raw cosines are dominated by the offset and a
/// few latent axes.
pub struct Synthetic {
    pub dim: usize,
    pub latent: usize,
    pub condition: f64,
    pub offset_scale: f64,
    pub noise: f64,
}

impl Synthetic {
    pub fn anisotropic() -> Self {
        Self {
            dim: 128,
            latent: 8,
            condition: 100.0,
            offset_scale: 5.0,
            noise: 0.01,
        }
    }

    pub fn generate(&self, rng: &mut impl Rng, pairs: usize, name: &str) -> PairedDataset {
        let d = self.dim;
        let mixing: Vec<Vec<f64>> = (0..self.latent)
            .map(|j| {
                let t = if self.latent > 1 {
                    j as f64 / (self.latent - 1) as f64
                } else {
                    0.0
                };
                let scale = self.condition.powf(-t);
                gaussian_vec(rng, d)
                    .into_iter()
                    .map(|v| v * scale)
                    .collect()
            })
            .collect();
        let spread: f64 = mixing
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let offset_dir = gaussian_vec(rng, d);
        let onorm = offset_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let offset: Vec<f64> = offset_dir
            .iter()
            .map(|v| v / onorm * self.offset_scale * spread)
            .collect();

        let embed = |rng: &mut dyn rand::RngCore, z: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|i| {
                    let signal: f64 = z.iter().zip(&mixing).map(|(zj, col)| zj * col[i]).sum();
                    let n: f64 = StandardNormal.sample(rng);
                    offset[i] + signal + self.noise * n
                })
                .collect()
        };

        let mut left = Vec::with_capacity(pairs * d);
        let mut right = Vec::with_capacity(pairs * d);
        let mut gold = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let s: f64 = rng.gen_range(0.0..1.0);
            let a = gaussian_vec(rng, self.latent);
            let e = gaussian_vec(rng, self.latent);
            let c = (1.0 - s * s).sqrt();
            let b: Vec<f64> = a.iter().zip(&e).map(|(ai, ei)| s * ai + c * ei).collect();
            left.extend(embed(rng, &a));
            right.extend(embed(rng, &b));
            gold.push(5.0 * s);
        }
        PairedDataset::new(
            name,
            EmbeddingMatrix::new(pairs, d, left).unwrap(),
            EmbeddingMatrix::new(pairs, d, right).unwrap(),
            gold,
        )
        .unwrap()
    }
}

/// Pairs whose similarity lives in two high-variance latent axes, plus
/// independent lower-variance noise in every coordinate.
pub fn two_signal_dims(rng: &mut impl Rng, pairs: usize, dim: usize) -> PairedDataset {
    let scales = [3.0, 2.0];
    let noise = 0.3;
    let basis: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let v = gaussian_vec(rng, dim);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let offset: Vec<f64> = gaussian_vec(rng, dim);
    let embed = |rng: &mut ChaCha8Rng, z: &[f64]| -> Vec<f64> {
        (0..dim)
            .map(|i| {
                let s: f64 = (0..2).map(|j| scales[j] * z[j] * basis[j][i]).sum();
                offset[i] + s + noise * gaussian(rng)
            })
            .collect::<Vec<f64>>()
    };
    let mut inner = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut gold = Vec::new();
    for _ in 0..pairs {
        let s: f64 = inner.gen_range(0.0..1.0);
        let a = gaussian_vec(&mut inner, 2);
        let e = gaussian_vec(&mut inner, 2);
        let c = (1.0 - s * s).sqrt();
        let b: Vec<f64> = a.iter().zip(&e).map(|(x, y)| s * x + c * y).collect();
        left.extend(embed(&mut inner, &a));
        right.extend(embed(&mut inner, &b));
        gold.push(5.0 * s);
    }
    PairedDataset::new(
        "two-signal",
        EmbeddingMatrix::new(pairs, dim, left).unwrap(),
        EmbeddingMatrix::new(pairs, dim, right).unwrap(),
        gold,
    )
    .unwrap()
}

/// `n` Gaussian vectors normalized to unit length.
pub fn unit_vectors(rng: &mut impl Rng, n: usize, dim: usize) -> EmbeddingMatrix {
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let v = gaussian_vec(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.into_iter().map(|x| x / norm));
    }
    EmbeddingMatrix::new(n, dim, data).unwrap()
}
