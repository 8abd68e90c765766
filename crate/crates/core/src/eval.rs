//! Semantic-textual-similarity evaluation.
//!
//! Each pair of embeddings is scored by cosine similarity and the scores are
//! compared with human similarity judgments by Spearman rank correlation.
//! Results are conventionally quoted as `ρ × 100`.

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::whitening::{Components, WhiteningTransform};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-30;

/// `x·y / (|x| |y|)`.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    if nx < ZERO_NORM || ny < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the average of their ranks.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::dims(pred.len(), gold.len()));
    }
    if pred.len() < 2 {
        return Err(Error::DegenerateInput("spearman needs at least two pairs"));
    }
    if pred.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input"));
    }
    pearson(&fractional_ranks(pred), &fractional_ranks(gold)).ok_or(Error::DegenerateInput(
        "constant ranking; correlation undefined",
    ))
}

/// Two aligned embedding sets and a gold similarity score per row pair.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub name: String,
    left: EmbeddingMatrix,
    right: EmbeddingMatrix,
    gold: Vec<f64>,
}

impl PairedDataset {
    pub fn new(
        name: impl Into<String>,
        left: EmbeddingMatrix,
        right: EmbeddingMatrix,
        gold: Vec<f64>,
    ) -> Result<Self> {
        if left.dim() != right.dim() {
            return Err(Error::dims(left.dim(), right.dim()));
        }
        if left.count() != right.count() {
            return Err(Error::dims(left.count(), right.count()));
        }
        if gold.len() != left.count() {
            return Err(Error::dims(left.count(), gold.len()));
        }
        if gold.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gold scores"));
        }
        Ok(Self {
            name: name.into(),
            left,
            right,
            gold,
        })
    }

    pub fn left(&self) -> &EmbeddingMatrix {
        &self.left
    }

    pub fn right(&self) -> &EmbeddingMatrix {
        &self.right
    }

    pub fn gold(&self) -> &[f64] {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.left.dim()
    }

    /// Both sides stacked: the default ("target") corpus for fitting.
    pub fn union(&self) -> EmbeddingMatrix {
        self.left
            .stack(&self.right)
            .expect("sides share a dimension")
    }
}

/// Outcome of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    /// Spearman ρ in `[-1, 1]`.
    pub spearman_rho: f64,
    /// Pairs that contributed to ρ.
    pub n_pairs: usize,
    /// Pairs dropped because one side had zero norm.
    pub skipped: usize,
    /// Dimension the cosines were computed in.
    pub dim_used: usize,
}

impl EvalReport {
    pub fn rho_x100(&self) -> f64 {
        self.spearman_rho * 100.0
    }
}

/// Cosine of every pair (optionally after `transform`) against gold scores.
pub fn evaluate(
    data: &PairedDataset,
    transform: Option<&WhiteningTransform>,
) -> Result<EvalReport> {
    match transform {
        None => score_pairs(&data.name, &data.left, &data.right, &data.gold),
        Some(t) => {
            let left = t.apply_batch(&data.left)?;
            let right = t.apply_batch(&data.right)?;
            score_pairs(&data.name, &left, &right, &data.gold)
        }
    }
}

fn score_pairs(
    name: &str,
    left: &EmbeddingMatrix,
    right: &EmbeddingMatrix,
    gold: &[f64],
) -> Result<EvalReport> {
    let mut cosines = Vec::with_capacity(gold.len());
    let mut kept_gold = Vec::with_capacity(gold.len());
    let mut skipped = 0;
    for ((l, r), g) in left.rows().zip(right.rows()).zip(gold) {
        match cosine_similarity(l, r) {
            Ok(c) => {
                cosines.push(c);
                kept_gold.push(*g);
            }
            Err(Error::ZeroVector) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let spearman_rho = spearman(&cosines, &kept_gold)?;
    Ok(EvalReport {
        dataset: name.to_string(),
        spearman_rho,
        n_pairs: cosines.len(),
        skipped,
        dim_used: left.dim(),
    })
}

/// One point of a dimensionality sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub components: Components,
    pub report: EvalReport,
}

/// Result of [`sweep_k`]: evaluated points in request order, plus requests
/// that exceeded the numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rank: usize,
    pub points: Vec<SweepPoint>,
    pub skipped: Vec<usize>,
}

/// Evaluates several truncations of one full fit.
///
/// The full transform is fitted once on `fit_corpus` (the union of both sides
/// when `None`), and each `k` uses its first `k` columns, which is exactly
/// what a separate fit with that `k` would produce.
pub fn sweep_k(
    data: &PairedDataset,
    fit_corpus: Option<&EmbeddingMatrix>,
    ks: &[Components],
    eps: Option<f64>,
) -> Result<Sweep> {
    let full = match fit_corpus {
        Some(corpus) => WhiteningTransform::fit(corpus, Components::All, eps)?,
        None => WhiteningTransform::fit(&data.union(), Components::All, eps)?,
    };
    let rank = full.output_dim();
    let mut points = Vec::with_capacity(ks.len());
    let mut skipped = Vec::new();
    for &c in ks {
        let t = match c {
            Components::All => full.clone(),
            Components::Top(k) if k == 0 || k > rank => {
                skipped.push(k);
                continue;
            }
            Components::Top(k) => full.truncate(k)?,
        };
        points.push(SweepPoint {
            components: c,
            report: evaluate(data, Some(&t))?,
        });
    }
    Ok(Sweep {
        rank,
        points,
        skipped,
    })
}
