use std::io;

use thiserror::Error;

/// Errors surfaced by grid construction, evaluation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("argument outside its domain: {0}")]
    Domain(String),
    #[error("incompatible grids: {0}")]
    GridCompatibility(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("linear solver breakdown: {0}")]
    Singular(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed record: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence(_) => 2,
            Error::Config(_) | Error::Domain(_) | Error::Parse(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
