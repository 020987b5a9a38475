use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: expected {expected} entries, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("column {0} has zero norm and must be pruned before stepping")]
    ZeroColumn(usize),
    #[error("point {index} has non-positive depth {depth} in the camera frame")]
    BehindCamera { index: usize, depth: f64 },
    #[error("polyline has zero arc length")]
    DegenerateCurve,
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Prefix the context of a non-finite error, leaving other variants untouched.
    pub fn with_context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("{prefix}: {context}"),
            },
            other => other,
        }
    }
}
