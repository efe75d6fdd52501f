use thiserror::Error;

/// Errors raised by the menagerie library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code dimensions {rows}x{cols}: {reason}")]
    InvalidDimensions {
        rows: u32,
        cols: u32,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid calibration: {0}")]
    InvalidSpec(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no overlap between genuine and imposter scores (mGS={mgs}, MIS={mis})")]
    NoOverlap { mgs: f64, mis: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
