//! Extreme multi-label classification with data-independent Gaussian
//! random-projection embeddings.
//!
//! A learner is nothing more than a seed: the projection matrix is regenerated
//! on demand from `(seed, d, r)`, the training features are projected and
//! L2-normalized, and labels are propagated from the exhaustive k nearest
//! neighbours of each query. Learners built from distinct seeds are fused by
//! uniform score averaging.
//!
//! Module map:
//! - [`data`]: sparse datasets, the repository text format, synthetic data
//! - [`gaussian`]: counter-based standard-normal streams
//! - [`embedding`]: projection and normalization, embedded-matrix cache
//! - [`predictor`]: exhaustive kNN and weighted label propagation
//! - [`ensemble`]: multi-seed fusion and ensemble-size sweeps
//! - [`metrics`]: P@K, nDCG@K and their propensity-scored variants
//! - [`jl`]: distortion bounds and empirical distortion measurement
//! - [`lsh`]: signed-random-projection LSH baseline
//! - [`par`]: rayon-backed data parallelism with a sequential fallback

pub mod config;
pub mod data;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod jl;
pub mod lsh;
pub mod metrics;
pub mod par;
pub mod predictor;

pub use data::{LabelSet, SparseDataset, SparseVector, SyntheticParams};
pub use embedding::{EmbeddedMatrix, EmbeddingSpec};
pub use ensemble::EnsembleSpec;
pub use error::{Error, Result};
pub use metrics::{EvalReport, PropensityModel};
pub use predictor::{NeighborList, ScoreVector};

/// Default embedding dimensionality.
pub const DEFAULT_R: usize = 200;
/// Default number of nearest neighbours.
pub const DEFAULT_K: usize = 5;
/// Default ensemble size.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;
