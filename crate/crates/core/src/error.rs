use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or hyperparameters are inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// Caller-supplied data violates an operation's preconditions.
    #[error("input error: {0}")]
    Input(String),
    /// An API was used out of order (e.g. backward on an empty tape).
    #[error("usage error: {0}")]
    Usage(String),
    /// A metric is not defined for the given data.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// A non-finite value appeared during computation.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Broken internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::Error::Input(alloc::format!($($arg)*)) };
}
pub(crate) use config_err;
pub(crate) use input_err;
