use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}; last good checkpoint: {}", last_good.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    Diverged { iteration: usize, last_good: Option<PathBuf> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] deeprx_core::Error),
    #[error(transparent)]
    Net(#[from] deeprx_net::Error),
    #[error(transparent)]
    Nn(#[from] deeprx_nn::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
