//! Errors shared by the model-service ports (embedding and similarity).

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PortError {
    #[error("transport error (retryable: {retryable}): {message}")]
    Transport { retryable: bool, message: String },
    #[error("port contract violated: {0}")]
    Contract(String),
}

impl PortError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, PortError::Transport { retryable: true, .. })
    }
}
