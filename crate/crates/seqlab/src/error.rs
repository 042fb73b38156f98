//! Error type shared by every module in the crate.
//!
//! Programming-contract violations in the numeric kernels (shape mismatches
//! and the like) panic instead; everything driven by user data or runtime
//! state surfaces as an [`Error`].

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad fold count,
    /// mismatched sequence lengths, overlapping spans, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input data; `line` is 1-based when it refers to a file.
    #[error("data format error at line {line}: {msg}")]
    DataFormat { line: usize, msg: String },

    /// An operation that requires a nonempty input got an empty one.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Training produced a non-finite loss/objective.
    #[error("numeric failure at epoch {epoch}, sequence {sequence}: {msg}")]
    Numeric {
        epoch: usize,
        sequence: usize,
        msg: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data_format(line: usize, msg: impl Into<String>) -> Self {
        Error::DataFormat {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
