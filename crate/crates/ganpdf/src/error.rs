//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension mismatch between two values that must agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration or network-description value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed input data (binary parse failures carry the byte offset).
    #[error("parse error at byte {offset}: {what}")]
    Parse { offset: usize, what: String },

    /// Data-level problem that is not a parse failure (missing file, empty
    /// dataset where one is required, label/count mismatch).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical contract was violated (non-finite loss or gradient,
    /// singular matrix where a full-rank one is required).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_) | Error::Parse { .. } | Error::Data(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
