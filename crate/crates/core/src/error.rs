use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {requested} RF chains but the channel rank is {rank}")]
    InfeasibleRank { requested: usize, rank: usize },

    #[error("fully-connected factorization needs a non-empty dictionary")]
    MissingDictionary,

    #[error("codebook has zero power and cannot be normalized")]
    DegenerateCodebook,

    #[error("shaping failed at step {step}: {message}")]
    ShapingFailure { step: usize, message: String },

    #[error("table not computed: {0}")]
    NotComputed(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
