//! Error types shared across the crate.

use std::path::PathBuf;

/// Errors produced by the matching library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Shapes of two inputs do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Instance exceeds a hard capacity limit (e.g. exhaustive enumeration).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// An iterative procedure failed to converge.
    #[error("no convergence: {what} (residual {residual:.3e} after {rounds} rounds)")]
    NonConvergence {
        what: &'static str,
        residual: f64,
        rounds: usize,
    },

    /// Numerical contract violated (step sizes, NaN costs, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed image or field file.
    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 i/o, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Capacity(_) | Error::Dimension(_) => 1,
            Error::Io { .. } | Error::Parse { .. } => 2,
            Error::NonConvergence { .. } | Error::Numerical(_) => 3,
        }
    }
}
