//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension {requested} exceeds cap {cap} ({context})")]
    DimensionCap {
        requested: u128,
        cap: usize,
        context: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operator is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("jump set is not closed under adjoint: {0}")]
    NotAdjointClosed(String),

    #[error("filter violates the KMS condition: max defect {max_defect:.3e} at nu = {nu}")]
    KmsViolation { max_defect: f64, nu: f64 },

    #[error("operator does not commute with total number (defect {defect:.3e})")]
    NotNumberConserving { defect: f64 },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("wrong picture: expected {expected}, got {got}")]
    WrongPicture { expected: String, got: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
