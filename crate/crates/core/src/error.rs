use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh: {0}")]
    MalformedMesh(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Prefixes the message with `what` (e.g. the input being processed).
    pub fn context(self, what: &str) -> Self {
        match self {
            Error::MalformedMesh(m) => Error::MalformedMesh(format!("{what}: {m}")),
            Error::Config(m) => Error::Config(format!("{what}: {m}")),
            Error::DimensionMismatch { expected, got } => {
                Error::Config(format!("{what}: dimension mismatch: expected {expected}, got {got}"))
            }
            Error::Solver(m) => Error::Solver(format!("{what}: {m}")),
            Error::Degenerate(m) => Error::Degenerate(format!("{what}: {m}")),
            Error::Numerical { iteration, message } => Error::Numerical {
                iteration,
                message: format!("{what}: {message}"),
            },
            io_or_parse => io_or_parse,
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solver(_) | Error::Numerical { .. } | Error::Degenerate(_)
        )
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
