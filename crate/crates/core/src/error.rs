//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameters, mismatched layer specs,
    /// unusable command-line settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid input data: unreadable audio, malformed manifests, empty clips.
    #[error("data error: {0}")]
    Data(String),

    /// Parse failure in a line-oriented file (manifest, run config).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Tensor shapes inconsistent with an operation's contract.
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    /// An operation produced NaN or Inf.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// Malformed or truncated checkpoint file.
    #[error("checkpoint error in {section}: {msg}")]
    Checkpoint {
        section: &'static str,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Broken internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape {
            op,
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data/io, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 1,
            Error::Data(_) | Error::Io(_) | Error::Checkpoint { .. } => 2,
            Error::Shape { .. } | Error::NonFinite { .. } | Error::Internal(_) => 3,
        }
    }
}
