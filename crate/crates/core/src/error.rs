//! Error type shared across the crate.

use thiserror::Error;

/// Machine-readable error categories, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Argument,
    Shape,
    Index,
    Invariant,
    Generation,
    Config,
    Checkpoint,
    Metric,
    NonFinite,
    Io,
    Backend,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Argument => "argument",
            Category::Shape => "shape",
            Category::Index => "index",
            Category::Invariant => "invariant",
            Category::Generation => "generation",
            Category::Config => "config",
            Category::Checkpoint => "checkpoint",
            Category::Metric => "metric",
            Category::NonFinite => "non_finite",
            Category::Io => "io",
            Category::Backend => "backend",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("index out of bounds: {0}")]
    Index(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value in loss term `{term}`: {value}")]
    NonFinite { term: String, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor backend error: {0}")]
    Backend(#[from] candle_core::Error),
}

impl Error {
    /// Category tag for structured reporting.
    pub fn category(&self) -> Category {
        match self {
            Error::Argument(_) => Category::Argument,
            Error::Shape { .. } => Category::Shape,
            Error::Index(_) => Category::Index,
            Error::Invariant(_) => Category::Invariant,
            Error::Generation(_) => Category::Generation,
            Error::Config(_) => Category::Config,
            Error::Checkpoint(_) => Category::Checkpoint,
            Error::UndefinedMetric(_) => Category::Metric,
            Error::NonFinite { .. } => Category::NonFinite,
            Error::Io(_) | Error::Image(_) | Error::Json(_) => Category::Io,
            Error::Backend(_) => Category::Backend,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
