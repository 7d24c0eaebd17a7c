use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input image has no usable content (constant intensity, blank page).
    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("optimizer state mismatch: {0}")]
    State(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("SVM training did not converge after {iterations} iterations (KKT gap {gap:.3e}, tolerance {tolerance:.1e})")]
    NoConvergence {
        iterations: usize,
        gap: f64,
        tolerance: f64,
    },

    #[error("reporting error: {0}")]
    Report(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("image decoding failed: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
