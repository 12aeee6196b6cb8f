//! Crate-wide error type.

use thiserror::Error;

use crate::validate::Violation;

#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid configuration or scenario input.
    #[error("config error: {0}")]
    Config(String),

    /// An allocation outcome broke one of the executable constraints.
    #[error("constraint violation: {0}")]
    Validation(#[from] Violation),

    /// The exhaustive oracle refuses models above its variable cap.
    #[error("model has {vars} binary variables, exhaustive search is capped at {limit}")]
    OracleLimit { vars: usize, limit: usize },

    /// Malformed LP text, grid dump or solution file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code convention: 2 for config / input errors, 3 for
    /// validator failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Parse(_) => 2,
            SimError::Validation(_) => 3,
            _ => 1,
        }
    }
}
