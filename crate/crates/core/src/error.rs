use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("event scheduled in the past: fire_time {at} < clock {now}")]
    ScheduleInPast { at: f64, now: f64 },

    #[error("invalid interval: lo {lo} > hi {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Scenario parse or validation failure, pointing at the offending key.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: `{key}`: {message}")]
pub struct ConfigError {
    /// 1-based line number, 0 when the error is not tied to a line.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line,
            key: key.into(),
            message: message.into(),
        }
    }
}
