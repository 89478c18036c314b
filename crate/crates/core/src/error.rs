use thiserror::Error;

use crate::trace::TraceError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("token {token}: dimension mismatch (expected {expected}, found {found})")]
    TokenDimension {
        token: usize,
        expected: usize,
        found: usize,
    },

    #[error("{0}: non-finite value")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bases are not mutually orthogonal: max |U^T P| = {defect:e}")]
    NotOrthogonal { defect: f64 },

    #[error("basis columns are not orthonormal: max |B^T B - I| = {defect:e}")]
    NotOrthonormal { defect: f64 },

    #[error("linear system is ill-conditioned (estimate {estimate:e})")]
    IllConditioned { estimate: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Trace(#[from] TraceError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by shapes that do not line up.
    pub fn is_dimension_mismatch(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. } | Error::TokenDimension { .. }
        )
    }
}
