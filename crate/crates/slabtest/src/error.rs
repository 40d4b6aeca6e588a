//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    /// The message names the offending quantity and the valid range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown prior `{0}`; known priors: quasi-cauchy, laplace:<a>, quadrature:<prior>")]
    UnknownPrior(String),

    #[error(
        "unknown procedure `{0}`; known procedures: ebayes-l, ebayes-q, ebayes-q0, \
         ebayes-hybrid, sc, mci, bh, bonferroni"
    )]
    UnknownProcedure(String),

    /// Configuration rejected during parsing/validation (bad JSON, unknown key,
    /// out-of-range field, ...). The message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
