use thiserror::Error;

/// Errors raised anywhere in the framework.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate vector: {0}")]
    Degenerate(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("missing semantic targets for classes: {}", .0.join(", "))]
    MissingTargets(Vec<String>),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("incomplete accuracy matrix: {0}")]
    Incomplete(String),
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable kind, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Degenerate(_) => "degenerate",
            Error::Label { .. } => "label",
            Error::Protocol(_) => "protocol",
            Error::MissingTargets(_) => "lookup",
            Error::Rank(_) => "rank",
            Error::Parse { .. } => "parse",
            Error::Incomplete(_) => "incomplete",
            Error::Undefined(_) => "undefined",
            Error::Config(_) => "config",
            Error::Comparison(_) => "comparison",
            Error::Empty(_) => "empty",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
