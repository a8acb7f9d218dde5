#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint format error in '{tensor}': {message}")]
    Format { tensor: String, message: String },
    #[error("checkpoint was written for config '{found}', expected '{expected}'")]
    ConfigMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] deeprx_nn::Error),
    #[error(transparent)]
    Core(#[from] deeprx_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn format_err<T>(tensor: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Format { tensor: tensor.to_string(), message: message.into() })
}
