use std::path::PathBuf;

use naf_core::NafError;
use thiserror::Error;

/// Failures of a pipeline stage, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 1).
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    /// Missing, corrupted or mismatched artifacts, or a tampered model
    /// (exit code 2).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Training divergence or non-finite optimization (exit code 3).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Integrity(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<NafError> for CliError {
    fn from(e: NafError) -> Self {
        match e {
            NafError::Shape { .. } | NafError::Config(_) | NafError::UnknownLayer(_) | NafError::Capacity(_) => {
                CliError::validation(e.to_string())
            }
            NafError::Format { .. } | NafError::Integrity(_) | NafError::Tamper(_) | NafError::Io(_) => {
                CliError::Integrity(e.to_string())
            }
            NafError::Divergence { .. } | NafError::Optimization { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Integrity(format!("malformed JSON artifact: {e}"))
    }
}
