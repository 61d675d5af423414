use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("marker column {index} ('{id}') has no non-missing genotypes")]
    AllMissingColumn { index: usize, id: String },

    #[error("all markers are monomorphic; centered relationship matrix is undefined")]
    AllMonomorphic,

    #[error("fixed-effect design is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite within jitter {jitter:e}")]
    NotPsd { jitter: f64 },

    #[error("covariance matrix is singular: {0}")]
    Singular(String),

    #[error("pedigree error for '{id}': {reason}")]
    Pedigree { id: String, reason: String },

    #[error("unknown {kind} '{id}'")]
    UnknownId { kind: &'static str, id: String },

    #[error("MCMC chain {chain} diverged at iteration {iteration}: {what} is not finite")]
    Divergent {
        chain: usize,
        iteration: usize,
        what: String,
    },

    #[error("need at least {required} retained samples per chain, got {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("cross-validation fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
