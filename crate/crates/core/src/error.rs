use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dataset too short: {needed} samples needed, {available} available")]
    TooShort { needed: usize, available: usize },

    #[error("trajectory diverged at sample {index}")]
    Divergence { index: usize },

    #[error("static curve is singular at u_bar = {u_bar}")]
    SingularStaticCurve { u_bar: f64 },

    #[error("normal equations are rank deficient (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("non-finite Jacobian at iteration {iteration}")]
    NonFiniteJacobian { iteration: usize },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    #[error("no candidate models left for selection")]
    NoCandidates,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
