use thiserror::Error;

/// Errors raised by the solvers, metrics and configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("precondition refused: {0}")]
    Refused(String),

    #[error("iteration diverged after {iterations} iterations (last delta {last_delta:e})")]
    Diverged {
        iterations: usize,
        last_delta: f64,
        trace: Vec<crate::meanfield::TraceEntry>,
    },

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
