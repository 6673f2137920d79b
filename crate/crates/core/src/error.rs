use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shapes, ranges, sizes).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model or state file could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// A non-finite value appeared in a loss, gradient or parameter.
    #[error("numerical error at step {step}: {message}")]
    Numerical { step: u64, message: String },

    /// Inputs are well-formed but unusable (empty dataset and the like).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
