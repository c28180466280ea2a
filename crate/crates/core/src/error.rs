use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("dimensions {width}x{height} overflow the addressable size")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("image codec: {0}")]
    Codec(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("box collapses to zero area after pixel rounding")]
    DegenerateBox,
    #[error("mask is empty")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected:?}, found {actual:?}")]
    DimensionMismatch { expected: (u32, u32), actual: (u32, u32) },
    #[error("box lies outside the {width}x{height} frame")]
    BBoxOutOfFrame { width: u32, height: u32 },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("mask level must be in 1..=5, got {0}")]
    InvalidMaskLevel(u8),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Codec(other.to_string()),
        }
    }
}
