use thiserror::Error;

/// Errors raised across the alignment toolkit.
///
/// Variants are grouped by how a caller should react: `Shape`, `Config` and
/// `Capacity` are input problems, `Format`/`Integrity`/`Tamper` concern
/// artifacts on disk or suspicious models, and `Divergence`/`Optimization`
/// are numeric failures.
#[derive(Debug, Error)]
pub enum NafError {
    #[error("shape mismatch at {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("tamper detected: {0}")]
    Tamper(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("trigger optimization produced a non-finite loss at step {step}")]
    Optimization { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NafError {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        NafError::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        NafError::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = NafError> = std::result::Result<T, E>;
