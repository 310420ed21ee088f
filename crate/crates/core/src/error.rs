use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the inference engine.
///
/// Each variant maps onto one of the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {message}{}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Data { message: String, line: Option<usize> },

    #[error("degenerate state at step {step}: {message}")]
    DegenerateState { step: usize, message: String },

    #[error("particle degeneracy at step {step}: all weights are zero")]
    ParticleDegeneracy { step: usize },

    #[error("numerical degeneracy at step {step}: {message}")]
    Numerical { step: usize, message: String },

    #[error("random stream layout error: {0}")]
    Layout(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data { message: msg.into(), line: None }
    }

    pub fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data { message: msg.into(), line: Some(line) }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Layout(_) => 2,
            Error::Data { .. } | Error::Io { .. } => 3,
            Error::DegenerateState { .. }
            | Error::ParticleDegeneracy { .. }
            | Error::Numerical { .. } => 4,
        }
    }

    /// True for failures of a likelihood estimate that a sampler should
    /// treat as a rejected proposal rather than a fatal error.
    pub fn is_estimator_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateState { .. } | Error::ParticleDegeneracy { .. } | Error::Numerical { .. }
        )
    }
}
