use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented invariant or precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid too small: {what} needs at least {min_rows}x{min_cols}, got {rows}x{cols}")]
    GridTooSmall {
        what: &'static str,
        min_rows: usize,
        min_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("degenerate signal mean")]
    DegenerateSignalMean,

    #[error("non-finite value in {network} network at layer {layer}")]
    NonFiniteActivation { network: String, layer: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    /// Training produced a non-finite loss or gradient; carries the state
    /// just before the failing update.
    #[error("training diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        state: Box<crate::train::TrainingState>,
    },

    #[error("uncalibratable: {0}")]
    Uncalibratable(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation-class errors (bad input, bad config) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::DimensionMismatch(_)
                | Error::GridTooSmall { .. }
                | Error::DegenerateSignalMean
                | Error::Format { .. }
                | Error::Config(_)
        )
    }
}
