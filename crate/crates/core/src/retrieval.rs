//! Exact brute-force cosine retrieval and a throughput benchmark.
//!
//! Index rows are normalized in 64-bit arithmetic and stored as 32-bit
//! floats, so an index of `n` vectors of dimension `d` occupies exactly
//! `4 n d` bytes and a query costs `n` dot products of length `d`. Both scale
//! linearly with `d`, which is what makes reducing the dimension pay off.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::Serialize;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::ZERO_NORM;
use crate::linalg::norm;

/// Bytes used to store one index coordinate.
pub const BYTES_PER_COORD: usize = std::mem::size_of::<f32>();

/// Unit-normalized rows in 32-bit storage, with their source row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineIndex {
    dim: usize,
    vectors: Vec<f32>,
    ids: Vec<usize>,
    norms_dropped: usize,
}

/// One retrieval result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hit {
    /// Row index in the data the index was built from.
    pub id: usize,
    pub score: f64,
}

/// Normalizes every row and drops zero-norm ones.
pub fn build_index(data: &EmbeddingMatrix) -> Result<CosineIndex> {
    if data.is_empty() {
        return Err(Error::EmptyInput("index over zero rows"));
    }
    let mut vectors = Vec::with_capacity(data.count() * data.dim());
    let mut ids = Vec::with_capacity(data.count());
    for (i, row) in data.rows().enumerate() {
        let n = norm(row);
        if n < ZERO_NORM {
            continue;
        }
        vectors.extend(row.iter().map(|v| (v / n) as f32));
        ids.push(i);
    }
    Ok(CosineIndex {
        dim: data.dim(),
        norms_dropped: data.count() - ids.len(),
        vectors,
        ids,
    })
}

// Eight independent accumulators so the loop vectorizes.
#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

// Heap entry ordered so the *worst* hit is the maximum: lower score, then
// higher id.
#[derive(Clone, Copy, PartialEq)]
struct Worst {
    score: f32,
    slot: usize,
}

impl Eq for Worst {}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.slot.cmp(&other.slot))
    }
}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl CosineIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored rows.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn norms_dropped(&self) -> usize {
        self.norms_dropped
    }

    /// Stored row `slot` (not source id).
    pub fn vector(&self, slot: usize) -> &[f32] {
        &self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn bytes_per_vector(&self) -> usize {
        self.dim * BYTES_PER_COORD
    }

    pub fn total_bytes(&self) -> usize {
        self.vectors.len() * BYTES_PER_COORD
    }

    fn unit_query(&self, query: &[f64]) -> Result<Vec<f32>> {
        if query.len() != self.dim {
            return Err(Error::dims(self.dim, query.len()));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query"));
        }
        let n = norm(query);
        if n < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        Ok(query.iter().map(|v| (v / n) as f32).collect())
    }

    #[inline]
    fn hit(&self, slot: usize, score: f32) -> Hit {
        Hit {
            id: self.ids[slot],
            score: (score as f64).clamp(-1.0, 1.0),
        }
    }

    /// Cosine score of every stored row against `query`, in storage order.
    pub fn scores(&self, query: &[f64]) -> Result<Vec<Hit>> {
        let q = self.unit_query(query)?;
        Ok((0..self.len())
            .map(|slot| self.hit(slot, dot_f32(self.vector(slot), &q)))
            .collect())
    }

    /// The `k` best rows by cosine, best first; equal scores are ordered by
    /// ascending id. Returns every row when `k` exceeds the index size.
    pub fn top_k(&self, query: &[f64], k: usize) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k_results must be at least 1"));
        }
        let q = self.unit_query(query)?;
        let k = k.min(self.len());
        let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
        for (slot, row) in self.vectors.chunks_exact(self.dim).enumerate() {
            let score = dot_f32(row, &q);
            if heap.len() < k {
                heap.push(Worst { score, slot });
            } else if heap.peek().is_some_and(|w| score > w.score) {
                heap.pop();
                heap.push(Worst { score, slot });
            }
        }
        // Ascending by Worst order is best-first.
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|w| self.hit(w.slot, w.score))
            .collect())
    }

    /// [`top_k`](Self::top_k) for every row of `queries`, split into
    /// contiguous blocks across `threads` workers. Results are in query order
    /// and do not depend on the thread count.
    pub fn top_k_batch(
        &self,
        queries: &EmbeddingMatrix,
        k: usize,
        threads: usize,
    ) -> Vec<Result<Vec<Hit>>> {
        let threads = threads.clamp(1, queries.count().max(1));
        if threads == 1 {
            return queries.rows().map(|q| self.top_k(q, k)).collect();
        }
        let per = queries.count().div_ceil(threads);
        std::thread::scope(|scope| {
            let workers: Vec<_> = (0..queries.count())
                .step_by(per)
                .map(|first| {
                    let last = (first + per).min(queries.count());
                    scope.spawn(move || {
                        (first..last)
                            .map(|r| self.top_k(queries.row(r), k))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            workers
                .into_iter()
                .flat_map(|w| w.join().expect("query worker panicked"))
                .collect()
        })
    }
}

/// Throughput and storage figures for one index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub n_vectors: usize,
    pub dim: usize,
    pub n_queries: usize,
    pub k_results: usize,
    pub repetitions: usize,
    pub threads: usize,
    /// Median over repetitions.
    pub queries_per_second: f64,
    pub bytes_per_vector: usize,
    pub total_index_bytes: usize,
}

/// Benchmark figures plus the answers of the final repetition.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub report: BenchReport,
    pub hits: Vec<Vec<Hit>>,
}

/// Runs every query `repetitions` times and reports median throughput.
///
/// Queries are split into contiguous blocks across `threads` workers; the
/// answers are those of [`CosineIndex::top_k`] whatever the thread count.
pub fn benchmark(
    index: &CosineIndex,
    queries: &EmbeddingMatrix,
    k_results: usize,
    repetitions: usize,
    threads: usize,
) -> Result<Benchmark> {
    if queries.is_empty() || index.is_empty() {
        return Err(Error::EmptyInput(
            "benchmark needs queries and a non-empty index",
        ));
    }
    if repetitions < 3 {
        return Err(Error::InvalidArgument("repetitions must be at least 3"));
    }
    if k_results == 0 {
        return Err(Error::InvalidArgument("k_results must be at least 1"));
    }
    if queries.dim() != index.dim() {
        return Err(Error::dims(index.dim(), queries.dim()));
    }
    let threads = threads.clamp(1, queries.count());

    let mut secs = Vec::with_capacity(repetitions);
    let mut hits = Vec::new();
    for _ in 0..repetitions {
        let start = Instant::now();
        hits = index
            .top_k_batch(queries, k_results, threads)
            .into_iter()
            .collect::<Result<_>>()?;
        secs.push(start.elapsed().as_secs_f64().max(1e-9));
    }
    secs.sort_by(f64::total_cmp);
    let median = if repetitions % 2 == 1 {
        secs[repetitions / 2]
    } else {
        0.5 * (secs[repetitions / 2 - 1] + secs[repetitions / 2])
    };

    Ok(Benchmark {
        report: BenchReport {
            n_vectors: index.len(),
            dim: index.dim(),
            n_queries: queries.count(),
            k_results,
            repetitions,
            threads,
            queries_per_second: queries.count() as f64 / median,
            bytes_per_vector: index.bytes_per_vector(),
            total_index_bytes: index.total_bytes(),
        },
        hits,
    })
}
