use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("trace drifted by {drift:.3e} during propagation; increase the substep count")]
    TraceDrift { drift: f64 },

    #[error("gradient tape does not belong to the current parameters")]
    StaleTape,

    #[error("replay buffer holds {size} transitions, cannot sample a batch of {batch}")]
    BufferUnderfull { size: usize, batch: usize },

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::TraceDrift { .. } | Error::Divergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
