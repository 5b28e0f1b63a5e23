use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, indices or invalid values handed to an operation.
    #[error("configuration error: {0}")]
    Config(String),

    /// The request is valid in principle but outside what the routine supports.
    #[error("capability error: {0}")]
    Capability(String),

    /// Input with no well-defined answer (all-zero couplings, empty windows).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("optimization fault at iteration {iteration}: {source}")]
    Optimization {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("statistical fault: {0}")]
    Statistical(String),

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            message: message.into(),
        }
    }
}
