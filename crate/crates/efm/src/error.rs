use thiserror::Error;

pub type Result<T> = std::result::Result<T, EfmError>;

#[derive(Debug, Error)]
pub enum EfmError {
    /// User-facing configuration problems; the message lists every failing field.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Structurally invalid arguments to a library call (shape mismatch, empty input, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A file failed to parse; messages name the line and field.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    /// Kernel system is unsolvable (duplicate anchors at zero ridge, rank-deficient Gram).
    #[error("ill-posed kernel system: {0}")]
    IllPosed(String),

    /// NaN/Inf or solver breakdown at runtime.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl EfmError {
    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        EfmError::Parse { path: path.into(), message: message.into() }
    }
}
