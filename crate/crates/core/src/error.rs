use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("optimizer diverged after {iterations} iterations; last finite model {last_model}")]
    OptimizerDiverged {
        iterations: usize,
        /// Human-readable rendering of the last finite model.
        last_model: String,
    },

    #[error("insufficient events: {found} < {required}")]
    InsufficientEvents { found: usize, required: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid synthetic scene: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: {message}: {text:?}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
        text: String,
    },

    #[error("{path}:{line}: timestamps not sorted ({prev} followed by {next})")]
    Unsorted {
        path: PathBuf,
        line: usize,
        prev: f64,
        next: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
