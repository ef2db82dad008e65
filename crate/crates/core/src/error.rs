use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("{what} is singular (condition estimate {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("{which} needs Markov blocks up to index {required}, only {available} available")]
    InsufficientMarkov {
        which: String,
        required: usize,
        available: usize,
    },

    #[error("plant cannot be reset between experiments; use the white-noise estimator instead")]
    NotResettable,

    #[error("plant returned a non-finite output at step {step}")]
    NonFiniteOutput { step: usize },

    #[error("plant output at step {step} has length {found}, expected {expected}")]
    OutputLength {
        step: usize,
        expected: usize,
        found: usize,
    },

    #[error("plant error: {0}")]
    Plant(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
