//! Error types shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot normalize a vector with norm {norm:e}")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("vector dimension must be at least 2, got {got}")]
    InvalidDimension { got: usize },

    #[error("input must be nonempty")]
    EmptyInput,

    #[error("temperature must be positive and finite, got {got}")]
    NonPositiveTemperature { got: f64 },

    #[error("expected {expected} rows, got {got}")]
    CountMismatch { expected: usize, got: usize },

    #[error("frequency for class {class} is negative: {value}")]
    NegativeFrequency { class: usize, value: f64 },

    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("batch must contain at least one sample")]
    EmptyBatch,

    #[error("need at least {needed} distinct classes, got {got}")]
    TooFewClasses { needed: usize, got: usize },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
