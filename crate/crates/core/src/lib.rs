//! Whitening-k post-processing for dense embeddings.
//!
//! Sentence embeddings from pre-trained encoders are anisotropic: they share
//! a large common offset and most of their variance sits in a few directions,
//! which makes raw cosine similarity a poor semantic score. Whitening maps a
//! set of vectors to zero mean and identity covariance; keeping only the `k`
//! highest-variance output directions (Whitening-k) also shrinks the vectors.
//!
//! ```
//! use whitevec::{Components, EmbeddingMatrix, WhiteningTransform};
//!
//! let data = EmbeddingMatrix::from_rows(&[
//!     [1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0],
//! ])?;
//! let t = WhiteningTransform::fit(&data, Components::All, None)?;
//! let y = t.apply(&[0.0, 2.0])?;
//! assert!((y[0] - 2f64.sqrt()).abs() < 1e-12 && y[1].abs() < 1e-12);
//! # Ok::<(), whitevec::Error>(())
//! ```
//!
//! Modules:
//!
//! - [`linalg`]: symmetric eigendecomposition (cyclic Jacobi).
//! - [`whitening`]: mean, covariance, fitting and applying the transform.
//! - [`streaming`]: mergeable running moments for corpora that do not fit in
//!   memory.
//! - [`eval`]: cosine + Spearman evaluation and dimensionality sweeps.
//! - [`retrieval`]: exact top-k cosine search and a throughput benchmark.
//! - [`io`]: the EMB1 matrix format, JSON transforms, gold-score files.

pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod retrieval;
pub mod streaming;
pub mod whitening;

pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use eval::{cosine_similarity, evaluate, spearman, sweep_k, EvalReport, PairedDataset, Sweep};
pub use linalg::{sym_eig, EigenDecomposition, SymmetricMatrix};
pub use retrieval::{benchmark, build_index, BenchReport, CosineIndex, Hit};
pub use streaming::MomentState;
pub use whitening::{compute_covariance, compute_mean, Components, WhiteningTransform};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/whitening.md")]
    mod whitening {}
    #[doc = include_str!("../../../book/src/choosing-k.md")]
    mod choosing_k {}
    #[doc = include_str!("../../../book/src/eigensolver.md")]
    mod eigensolver {}
    #[doc = include_str!("../../../book/src/streaming.md")]
    mod streaming {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
}
