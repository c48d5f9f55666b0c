use thiserror::Error;

/// Failure modes shared by every simulator layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid parameters or registries supplied by the caller's configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called outside its contract (unknown mode, mismatched registries, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Conditioning on an event whose probability is numerically zero.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Repeat-until-success loop exhausted its budget.
    #[error("attempt cap of {cap} reached without success")]
    AttemptCap { cap: u64 },
    /// A derived invariant did not hold.
    #[error("internal consistency error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
