use std::path::PathBuf;

/// Errors produced anywhere in the counterfactual pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("inconsistent dataset structure: {0}")]
    Structure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("evaluation of candidate {candidate} failed: {message}")]
    Evaluation { candidate: usize, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("regressor failure: {0}")]
    Regressor(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Wraps the error with a human-readable context prefix.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
