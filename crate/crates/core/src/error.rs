//! Error type shared by every module in this crate.

use thiserror::Error;

/// Unified error for configuration, shape, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A band was paired with a path set generated for a different band.
    #[error("band/path-set mismatch: {0}")]
    BandMismatch(String),

    /// A statistic is undefined for the given inputs (e.g. zero variance).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    /// Dataset file is malformed or inconsistent with its header.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Quantizer misuse (empty range, out-of-range code, bad tier spec).
    #[error("quantization error: {0}")]
    Quant(String),

    /// Sparse recovery failed (e.g. rank-deficient active set).
    #[error("sparse recovery error: {0}")]
    SparseRecovery(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
