use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown outcome `{0}`")]
    UnknownOutcome(String),

    #[error("group enumeration exceeded the cap of {cap} elements")]
    CapExceeded { cap: usize },

    #[error("tests have different sizes ({0:?}); rank is undefined")]
    NonUniformRank(Vec<usize>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no consistent linear extension: {0}")]
    InconsistentExtension(String),

    #[error("singular form or matrix: {0}")]
    Singular(String),

    #[error("morphism is not surjective: {0}")]
    NotSurjective(String),

    #[error("image state space is empty")]
    EmptyImage,

    #[error("unsupported for this backend: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
