use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Bad magic, unknown version, or an impossible header field.
    #[error("format error: {0}")]
    Format(String),

    /// Structurally valid header but the payload is damaged.
    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("insufficient data: need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("merge plan covers {plan} frames but sequence has {seq}")]
    PlanMismatch { plan: usize, seq: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("{what} out of range: {value} (allowed {allowed})")]
    Range {
        what: &'static str,
        value: u64,
        allowed: String,
    },

    #[error("stream alignment error: {0}")]
    Alignment(String),

    #[error("codec fingerprint mismatch: stream expects {expected:016x}, codec is {actual:016x}")]
    CodecMismatch { expected: u64, actual: u64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("encoding error: {0}")]
    Encoding(String),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: u64, allowed: impl Into<String>) -> Self {
        Error::Range {
            what,
            value,
            allowed: allowed.into(),
        }
    }
}
