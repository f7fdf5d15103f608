//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by kernel evaluation, GP updates, graph construction,
/// and simulation orchestration.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid static configuration (bad hyperparameter, unsupported variant).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (dimension mismatch, index out of range,
    /// disconnected graph where a connected one is required).
    #[error("input error: {0}")]
    Input(String),

    /// Numerical failure (Cholesky breakdown, eigensolver failure, NaN).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Violation of the bulk-synchronous message contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Random generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),

    /// Malformed text input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// Prefixes the message with simulation context (round, agent) so trial
    /// failures point at the offending step.
    pub(crate) fn in_context(self, context: &str) -> Error {
        match self {
            Error::Config(m) => Error::Config(format!("{context}: {m}")),
            Error::Input(m) => Error::Input(format!("{context}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{context}: {m}")),
            Error::Protocol(m) => Error::Protocol(format!("{context}: {m}")),
            Error::Generation(m) => Error::Generation(format!("{context}: {m}")),
            Error::Parse { line, msg } => Error::Parse {
                line,
                msg: format!("{context}: {msg}"),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
