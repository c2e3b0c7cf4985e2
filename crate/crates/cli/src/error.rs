//! Harness-level error type: configuration problems plus everything the
//! library crates can raise.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] csilab_core::Error),
    #[error(transparent)]
    Nn(#[from] csilab_nn::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, Error>;
