use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a previous backward pass; reset it first")]
    TapeConsumed,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at batch {batch} (global step {step})")]
    NonFiniteLoss { batch: usize, step: u64 },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{hyp} hypotheses but {refs} references")]
    CountMismatch { hyp: usize, refs: usize },

    #[error("{path}: bad magic (expected {expected})")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: unsupported version {version}")]
    BadVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: non-finite value at index {index}")]
    NonFiniteValue { path: PathBuf, index: usize },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing feature files for ids: {}", .0.join(", "))]
    MissingFeatures(Vec<String>),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input (files, flags, config) rather than
    /// a fault inside the library.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::TapeConsumed | Error::NonScalarLoss(_) | Error::ShapeMismatch { .. }
        )
    }
}
