use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cell could not be parsed. `row` is the 1-based data row (header excluded).
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    /// Input violates a documented invariant (entry >= time, broken trajectory, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Degenerate(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's data or arguments rather than by
    /// the library or the environment.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema(_)
                | Error::Validation(_)
                | Error::Dimension { .. }
                | Error::InvalidArgument(_)
                | Error::Degenerate(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
