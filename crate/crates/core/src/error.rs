use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A static parameter is invalid (bad key length, non power-of-two PSK order, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation received data that violates its preconditions.
    #[error("input error: {0}")]
    Input(String),
    /// A scenario or code file could not be parsed.
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
