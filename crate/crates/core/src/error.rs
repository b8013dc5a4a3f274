//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors raised by construction and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("reset surface is degenerate: C must be nonzero")]
    DegenerateSurface,

    #[error("invalid reset state count n_r = {n_r} for state dimension {n}")]
    InvalidResetCount { n_r: usize, n: usize },

    #[error("eigenvalue clustering is ambiguous near {lambda_a} / {lambda_b} (separation below 2*cluster_tol)")]
    AmbiguousClustering {
        lambda_a: num_complex::Complex<f64>,
        lambda_b: num_complex::Complex<f64>,
    },

    #[error("minimality precondition failed: {0}")]
    MinimalityViolated(String),

    #[error("operation not supported: {0}")]
    NotSupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
