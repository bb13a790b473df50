use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::Finding;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", list(.0))]
    Validation(Vec<Finding>),

    #[error("missing {artifact}; run `pricer {command}` first")]
    Dependency {
        artifact: PathBuf,
        command: &'static str,
    },

    #[error("{0}")]
    Core(#[from] pricer_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn list(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| format!("  {f}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl CliError {
    pub fn validation(path: &str, message: impl Into<String>) -> Self {
        CliError::Validation(vec![Finding {
            path: path.into(),
            message: message.into(),
        }])
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Dependency { .. } => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(pricer_core::Error::Io(_)) | CliError::Io { .. } => 1,
            CliError::Core(_) => 2,
        }
    }
}
