//! Error type shared across the neural substrate.

use thiserror::Error;

/// Errors produced while building, running, training, or persisting models.
#[derive(Debug, Error)]
pub enum Error {
    /// A model specification is structurally invalid (bad wiring, shape
    /// inference failure, incompatible parameter tie, ...).
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    /// Runtime tensors do not match the shapes the graph expects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The optimisation diverged (non-finite or runaway loss).
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    /// A checkpoint file is malformed or inconsistent with its spec.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A codec was driven with inputs it cannot accept.
    #[error("codec error: {0}")]
    Codec(String),

    /// Underlying I/O failure while reading or writing checkpoints.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Error bubbled up from the core signal-processing crate.
    #[error(transparent)]
    Core(#[from] csilab_core::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
