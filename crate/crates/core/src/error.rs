use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("unknown location index {0}")]
    UnknownLocation(usize),

    #[error("unknown receiver index {0}")]
    UnknownReceiver(usize),

    #[error("sample window is empty")]
    EmptyWindow,

    #[error("sample window has zero power; RSS in dB is undefined")]
    DegeneratePower,

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}; try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::UnknownLocation(_) => "unknown-location",
            Error::UnknownReceiver(_) => "unknown-receiver",
            Error::EmptyWindow => "empty-window",
            Error::DegeneratePower => "degenerate-power",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non-finite",
            Error::Format { .. } => "format",
            Error::Infeasible(_) => "infeasible",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
