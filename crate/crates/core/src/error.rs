use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed sizes, ranges, or flags that violate an operation's contract.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A model parameter is outside its declared range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A file or byte stream does not match the expected layout.
    #[error("format error: {0}")]
    Format(String),
    /// Problem size exceeds a hard resource budget.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// A statistic is undefined for the given data (zero variance, unit control correlation).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A gradient or activation went non-finite; the message names the block.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
