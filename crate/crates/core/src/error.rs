//! Error type shared across the solver core.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh validation failed: {0}")]
    MeshValidation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("assembly failed on cell {cell}: {msg}")]
    Assembly { cell: usize, msg: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("eigenvalue solve failed: {0}")]
    Eigen(String),

    #[error("newton iteration {iter} failed: {msg}")]
    Newton { iter: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
