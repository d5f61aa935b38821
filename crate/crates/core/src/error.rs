use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("outside validity range: {0}")]
    Validity(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures are distinguished from input problems at the CLI boundary.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
