use std::path::PathBuf;

use crate::training::TrainState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or out-of-contract argument.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Instance is too large for an exhaustive solver.
    #[error("instance too large for exact solver: {0}; use solve_km instead")]
    SizeLimit(String),

    /// A schema or syntax violation in an input document.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// Feature dimensions that disagree across files or with a checkpoint.
    #[error("incompatible dimensions: {0}")]
    Compatibility(String),

    #[error("unknown id: {0}")]
    Lookup(String),

    /// Non-finite gradient or loss; carries the last finite state.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence {
        epoch: usize,
        reason: String,
        snapshot: Box<TrainState>,
    },

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
