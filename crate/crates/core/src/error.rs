use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A singularity hint whose exponent makes the integrand non-integrable.
    #[error("non-integrable singularity at {location}: Re(exponent) = {re_exponent} <= -1")]
    NonIntegrable { location: f64, re_exponent: f64 },

    /// Argument outside the range where an approximation is calibrated.
    #[error("{what} = {value} outside calibrated range")]
    OutOfRange { what: &'static str, value: f64 },

    /// Not enough (or degenerate) data for a fit or a statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
