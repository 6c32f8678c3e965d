use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {index}: {what}")]
    NonFinite { what: String, index: usize },

    #[error("line search stagnated: {0}")]
    Stagnation(String),

    #[error("{0} is not a descent direction (Re<d, g> = {1:e})")]
    NotDescent(&'static str, f64),

    #[error("escape step failed to decrease the objective after {shrinks} shrinks (nu_min = {nu_min:e}); enlarge epsilon")]
    EscapeFailed { shrinks: usize, nu_min: f64 },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
