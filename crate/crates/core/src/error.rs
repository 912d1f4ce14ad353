use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed raster header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("raster payload {path} holds {actual} bytes, header implies {expected}")]
    DimensionMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("value {value} at pixel {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },

    #[error("I/O failure on {path}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid geotransform: {0}")]
    InvalidGeoTransform(String),

    #[error("raster has {actual} values, expected {expected}")]
    BadLength { expected: usize, actual: usize },

    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("class index {index} out of range for {classes} classes")]
    BadClassIndex { index: usize, classes: usize },

    #[error("rotated geotransforms cannot be polygonized")]
    RotatedGridUnsupported,

    #[error("ring is not closed")]
    OpenRing,

    #[error("area requested on geographic CRS {0:?}; reproject to a projected CRS first")]
    GeographicCrs(String),

    #[error("label {0} not present in fusion report")]
    UnknownLabel(u32),

    #[error("confusion counts are all zero")]
    EmptyInput,

    #[error("year order violated: {from} must precede {to}")]
    YearOrder { from: i32, to: i32 },

    #[error("at least two years are required, got {0}")]
    InsufficientYears(usize),

    #[error("invalid year gap {0}; gaps must be positive")]
    InvalidGap(i32),

    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),

    #[error("invalid scene spec: {0}")]
    SpecInvalid(String),
}
