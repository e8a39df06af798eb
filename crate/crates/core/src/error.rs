use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum SstError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("position {position} exceeds capacity {capacity}")]
    Capacity { position: usize, capacity: usize },

    #[error("token id {token} outside vocabulary of size {vocab}")]
    Vocabulary { token: u32, vocab: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    ConfigLine { path: String, line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("statistical test undefined: {0}")]
    UndefinedTest(String),

    #[error("gaussian mixture degenerate: {0}")]
    Degenerate(String),

    #[error("no crossover between component means (roots: {roots:?})")]
    NoCrossover { roots: Vec<f64> },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SstError>;
