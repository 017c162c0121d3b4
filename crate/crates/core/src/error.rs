//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's contract (bad argument, call
    /// outside the allowed state, mismatched trace/task pairing, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data failed invariant validation. Where possible the message
    /// names the offending element (node id, edge index, line).
    #[error("validation failed: {0}")]
    Validation(String),

    /// Bounded stochastic search (environment or task generation) ran out
    /// of attempts.
    #[error("generation failed after {attempts} attempts: {reason}")]
    GenerationExhausted { attempts: usize, reason: String },

    /// A token id outside the fixed vocabulary.
    #[error("unknown token id {0}")]
    UnknownToken(u32),

    /// Parameter/gradient shape mismatch.
    #[error("shape mismatch for '{name}': expected {expected}, got {got}")]
    ShapeMismatch {
        name: String,
        expected: String,
        got: String,
    },

    /// Non-finite value where training must abort.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON syntax or schema error; serde reports line/column.
    #[error("malformed file {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
