use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("singular volatility at s = {s}: {reason}")]
    Singularity { s: f64, reason: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("shape error: expected input of length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("{path}: line {line}: {message}")]
    Ingestion {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-finite loss at episode {episode} (window {window})")]
    NonFiniteLoss { episode: usize, window: usize },

    #[error(
        "wealth {wealth:e} at step {step} of window {window} is too small to form a pricing kernel"
    )]
    KernelDegeneracy {
        window: usize,
        step: usize,
        wealth: f64,
    },

    #[error("no implied volatility: {0}")]
    NoSolution(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come out of the numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singularity { .. }
                | Error::NonFiniteLoss { .. }
                | Error::KernelDegeneracy { .. }
                | Error::NoSolution(_)
        )
    }
}
