use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no motion steps")]
    NoMotionSteps,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("score map has no finite values")]
    EmptyScoreMap,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("patch of {width}x{height} is smaller than the embedding receptive field {min}")]
    PatchTooSmall { width: usize, height: usize, min: usize },

    #[error("box lies outside the frame")]
    BoxOutsideFrame,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("calibration set must contain both classes")]
    SingleClass,

    #[error("degenerate config: {0}")]
    DegenerateConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("sequence format: {0}")]
    Format(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing checkpoint for variant `{0}`")]
    MissingVariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
