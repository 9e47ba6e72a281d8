use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported image format")]
    UnsupportedFormat { path: PathBuf },

    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{path}: corrupt payload: {reason}")]
    CorruptPayload { path: PathBuf, reason: String },

    #[error("{path}: malformed label matrix: {reason}")]
    MalformedLabels { path: PathBuf, reason: String },

    #[error("label {label} does not fit in a 16-bit PNG")]
    LabelOverflow { label: u32 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("label map is not compact: {0}")]
    NonCompactLabels(String),

    #[error("unknown region {0}")]
    UnknownRegion(u32),

    #[error("partition covers {partition} nodes, expected {expected}")]
    PartitionMismatch { partition: usize, expected: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("empty ground-truth set")]
    EmptyGroundTruth,

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(left: (usize, usize), right: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        }
    }
}
