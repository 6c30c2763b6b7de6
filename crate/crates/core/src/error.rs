//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter dimension {dim} exceeds the dense cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("empty batch")]
    EmptyBatch,

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("task id {0} is already registered")]
    DuplicateTask(usize),

    #[error("operation requires the {expected} model family")]
    WrongFamily { expected: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("numerical divergence at step {step}")]
    NumericalDivergence { step: usize },

    #[error("no task with available data to sample")]
    NoSampleableTask,

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;
