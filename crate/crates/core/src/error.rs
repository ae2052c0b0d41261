use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("divergence in parameter `{param}` at step {step}")]
    Divergence { param: String, step: u64 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Maps a non-finite tensor result onto a divergence of `param`.
    pub(crate) fn diverged(err: TensorError, param: &str, step: u64) -> Self {
        match err {
            TensorError::NonFinite(_) => Error::Divergence {
                param: param.to_string(),
                step,
            },
            other => Error::Tensor(other),
        }
    }
}
