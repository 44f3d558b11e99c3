//! Error type shared by every module in the crate.
//!
//! Numeric kernels report dimension and parameter problems, the data layer
//! reports schema/label/split problems, and the training loop reports
//! non-finite values with enough context to locate the offending batch or
//! parameter block. The CLI maps these variants onto distinct exit codes.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible. Both shapes are named so the message
    /// is actionable without a debugger.
    #[error("{op}: dimension mismatch, left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A scalar argument is outside its documented domain (negative inverse
    /// temperature, zero-length input, ...).
    #[error("{op}: {msg}")]
    Parameter { op: &'static str, msg: String },

    /// An internal precondition would be violated; returned instead of
    /// producing silently wrong numbers.
    #[error("{op}: contract violation: {msg}")]
    Contract { op: &'static str, msg: String },

    /// Configuration file / CLI override problems (unknown key, bad value,
    /// inconsistent combination).
    #[error("config: {0}")]
    Config(String),

    /// A manifest or sample file disagrees with the dataset schema; the
    /// message names the offending sample and field.
    #[error("schema: {0}")]
    Schema(String),

    /// A label line is not a probability distribution.
    #[error("label: {0}")]
    Label(String),

    /// A split request cannot be satisfied by the dataset.
    #[error("split: {0}")]
    Split(String),

    /// Training aborted (non-finite loss or gradient, empty fold, ...).
    #[error("training ({context}): {msg}")]
    Training { context: String, msg: String },

    /// Evaluation aborted (non-finite prediction, empty test set, ...).
    #[error("evaluation: {0}")]
    Evaluation(String),

    /// Checkpoint file is missing, truncated, or from an incompatible layout.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Filesystem problem, annotated with the path involved.
    #[error("io ({path}): {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Convenience constructor for [`Error::Parameter`].
    pub fn parameter(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter { op, msg: msg.into() }
    }

    /// Convenience constructor for [`Error::Io`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code used by the command-line front end: 2 for configuration
    /// problems, 3 for data problems, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Schema(_) | Error::Label(_) | Error::Split(_) | Error::Io { .. } => 3,
            _ => 4,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
