use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("stability condition violated: ||Phi||_1 = {phi_norm} (must be < 1)")]
    Unstable { phi_norm: f64 },

    #[error("node {node} has no events; its statistics are undefined")]
    EmptyNode { node: usize },

    #[error("linear system for node {node} is singular or indefinite (smallest eigenvalue {min_eigenvalue:e})")]
    Singular { node: usize, min_eigenvalue: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HawkesError>;
