use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: lo ({lo}) must be below hi ({hi})")]
    InvalidWindow { lo: i32, hi: i32 },

    #[error("invalid range: lo ({lo}) must be below hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("image has no foreground pixels")]
    NoForeground,

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("region {x},{y} {w}x{h} lies outside a {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("atlas needs at least one source crop")]
    NoSources,

    #[error("joint histogram is empty")]
    EmptyHistogram,

    #[error("registration was not confirmed (pass an override to align anyway)")]
    Unconfirmed,

    #[error("pixel ({x},{y}) is background")]
    BackgroundPixel { x: usize, y: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset is empty")]
    EmptyData,

    #[error("training data has no {0} rows")]
    MissingClass(&'static str),

    #[error("schema hash mismatch: model expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("metric is undefined (zero denominator)")]
    UndefinedMetric,

    #[error("missing data for patient {0}")]
    MissingPatient(String),

    #[error("colour ({r},{g},{b}) at ({x},{y}) is not in the label palette")]
    Palette {
        x: usize,
        y: usize,
        r: u8,
        g: u8,
        b: u8,
    },

    #[error("invalid phantom spec: {0}")]
    PhantomSpec(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape { expected, found }
    }
}
