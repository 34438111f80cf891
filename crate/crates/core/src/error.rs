use thiserror::Error;

/// Crate-wide error type. The variants map onto the CLI exit codes:
/// `Validation` -> 2, `CapExceeded` -> 3, everything else -> runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Validation(String),
    #[error("{what} requires {needed} {unit}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
        unit: &'static str,
    },
    #[error("empty conditional support at site ({x},{y}): window and floor are contradictory")]
    EmptySupport { x: i64, y: i64 },
    #[error("estimate failed: {0}")]
    Estimate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
