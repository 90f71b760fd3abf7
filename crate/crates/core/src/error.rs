use thiserror::Error;

pub type Result<T, E = VcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("usage error: {0}")]
    Usage(String),

    /// A bound formula is undefined for the supplied spectrum.
    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl VcError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        VcError::InvalidInput(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            VcError::Io(_) => 3,
            _ => 2,
        }
    }
}
