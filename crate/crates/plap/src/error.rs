use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum PlapError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("functions live on different meshes")]
    MeshMismatch,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PlapError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        PlapError::InvalidArgument(msg.into())
    }
}
