//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A run configuration is invalid (bad ranges, empty seed mask, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// A file does not conform to its format; the message names the field.
    #[error("format error: {0}")]
    Format(String),
    /// Inputs that should describe the same run disagree.
    #[error("consistency error: {0}")]
    Consistency(String),
    /// Range refinement cannot proceed (e.g. zero accepted records).
    #[error("refinement error: {0}")]
    Refinement(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
