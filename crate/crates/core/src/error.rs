use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the triage pipeline.
///
/// Variants are grouped so the CLI can map them onto stable exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing artifact {artifact}: run `{command}` first")]
    Staged { artifact: String, command: &'static str },

    #[error("missing predictions for {} ids: {}", .0.len(), .0.join(","))]
    Coverage(Vec<String>),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cluster assignment error: {0}")]
    Assignment(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format { offset, message: message.into() }
    }

    /// Process exit status for this error: 2 config/input, 3 contract, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } | Error::Config(_) | Error::Argument(_) => 2,
            Error::Contract(_) | Error::Staged { .. } | Error::Coverage(_) | Error::Assignment(_) => 3,
            Error::Numeric(_) | Error::Divergence { .. } | Error::Degenerate(_) => 4,
        }
    }
}
