//! Error type shared by every module in the crate.

/// Errors surfaced by tensor math, data ingestion, training, and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension mismatch in {op}: left shape {left:?}, right shape {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A value lies outside the mathematical domain of the operation.
    #[error("domain error in {op}: {message}")]
    Domain {
        op: &'static str,
        message: String,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("optimizer state error: {0}")]
    State(String),
    /// Training produced a non-finite loss.
    #[error("non-finite loss at sentence {sentence}, optimizer step {step}")]
    Diverged { sentence: usize, step: u64 },
    #[error("incompatible model/data: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
