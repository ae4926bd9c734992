use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The input violates the class an operation requires (positive type,
    /// hyperbolic type, a valid cross-ratio table, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// Internal consistency check failed. This is a bug, not bad input.
    #[error("certification failed: {0}")]
    Certification(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

impl From<serde_json::Error> for GeoError {
    fn from(e: serde_json::Error) -> Self {
        GeoError::Parse(e.to_string())
    }
}
