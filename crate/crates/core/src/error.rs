use std::io;

use thiserror::Error;

/// Errors raised by the tensor kernel and the layers built on it.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Dimension { op: &'static str, msg: String },
    #[error("usage: {0}")]
    Usage(String),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn dim(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Dimension {
            op,
            msg: msg.into(),
        }
    }
}

/// Errors from reading or writing on-disk artifacts.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic in {what}: expected {expected:?}")]
    Magic { what: &'static str, expected: String },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{what} truncated: {detail}")]
    Truncated { what: &'static str, detail: String },
    #[error("{what}: index range violation: {detail}")]
    Range { what: &'static str, detail: String },
    #[error("{what}, line {line}: {detail}")]
    Record {
        what: &'static str,
        line: usize,
        detail: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Configuration validation failures. The message always names the key.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
}

impl ConfigError {
    pub(crate) fn invalid(key: &str, msg: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}

/// Top-level error for pipelines that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Format(FormatError::Io(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
