//! Error type shared across all modules.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum ColtError {
    /// Numerically degenerate input (zero-norm row, zero vector, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Invalid parameter or configuration value.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Internal contract violated by the caller (mismatched trace, missing score, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// OOD pool cannot cover the requested budget.
    #[error("pool exhausted: {0}")]
    PoolExhausted(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Failure annotated with the experiment phase it occurred in.
    #[error("[{phase}] {source}")]
    Phase {
        phase: String,
        #[source]
        source: Box<ColtError>,
    },
}

impl ColtError {
    /// Wraps the error with the experiment phase (epoch, stage) it came from.
    pub fn in_phase(self, phase: impl Into<String>) -> Self {
        ColtError::Phase {
            phase: phase.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, ColtError>;
