use thiserror::Error;

/// Errors raised by net, kernel and series operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An operation needs something the object cannot provide (derivative order,
    /// bounded support, a witness, enough verified moments).
    #[error("capability unavailable: {0}")]
    Capability(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("series did not reach tolerance {tol:e} within {cap} terms at epsilon = {epsilon:e}")]
    Divergence { epsilon: f64, tol: f64, cap: usize },
    #[error("kernel is not log-scale: {0}")]
    LogScaleGate(String),
    #[error("matrix function overflow at epsilon = {0:e}")]
    Overflow(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
