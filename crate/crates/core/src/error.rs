use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("theorem hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("non-finite value in field `{field}` at t = {t}")]
    NonFinite { field: &'static str, t: f64 },

    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("leap condition violated: dt * max_rate = {0} > 0.1")]
    LeapCondition(f64),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("step-size refinement did not converge: {0}")]
    NoConvergence(String),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
