use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("config error: {0}")]
    Config(String),

    /// A named model or solver constraint was violated.
    #[error("{name}: {detail}")]
    Constraint { name: &'static str, detail: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("instability at step {step}: non-finite state")]
    Instability { step: usize },

    #[error("timescale violation: micro step {h} exceeds epsilon/20 = {limit}")]
    Timescale { h: f64, limit: f64 },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
