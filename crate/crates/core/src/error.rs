use std::io;

use thiserror::Error;

/// Errors produced by the numerical and sampling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("requested accuracy {requested:e} not reached (achieved {achieved:e})")]
    Accuracy { achieved: f64, requested: f64 },

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numeric { message: msg.into(), residual }
    }
}
