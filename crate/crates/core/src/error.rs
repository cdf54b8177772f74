use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the mesh optimization library.
#[derive(Debug, Error)]
pub enum TmopError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A Jacobian determinant is non-positive where a positive one is required.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
}

pub type Result<T> = std::result::Result<T, TmopError>;

impl TmopError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TmopError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TmopError::Io {
            path: path.into(),
            source,
        }
    }
}
