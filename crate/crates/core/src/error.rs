//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera config: {0}")]
    InvalidCamera(String),

    #[error("depth {depth} m outside the valid domain [{min} m, inf)")]
    DepthOutOfDomain { depth: f64, min: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("empty valid mask: no pixel is valid in both maps")]
    EmptyMask,

    #[error("non-finite loss {loss} at iteration {iter}")]
    NonFiniteLoss { iter: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
