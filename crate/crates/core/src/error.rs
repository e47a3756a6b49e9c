use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate series: need at least 2 samples, got {0}")]
    DegenerateSeries(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("frame {frame} out of range (series has {n_frames} frames)")]
    FrameOutOfRange { frame: usize, n_frames: usize },

    #[error("index {index} out of range along {axis} (extent {extent})")]
    IndexOutOfRange { axis: &'static str, index: usize, extent: usize },

    #[error("gamma must lie in (0, 1], got {0}")]
    InvalidGamma(f64),

    #[error("operation requires a normalized feature volume")]
    NotNormalized,

    #[error("empty selection")]
    EmptySelection,

    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),

    #[error("unknown combination id `{0}`")]
    UnknownCombination(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("payload length mismatch for {path}: expected {expected} bytes, found {actual}")]
    LengthMismatch { path: PathBuf, expected: u64, actual: u64 },

    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),

    #[error("missing required header key `{0}`")]
    MissingKey(String),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("bad NIfTI magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDtype(i16),

    #[error("unsupported dimensionality {0} (at most 4 supported)")]
    TooManyDims(usize),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the file system or of an on-disk format, as
    /// opposed to invalid data or arguments.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::LengthMismatch { .. }
                | Error::UnknownDtype(_)
                | Error::MissingKey(_)
                | Error::Header(_)
                | Error::BadMagic(_)
                | Error::UnsupportedDtype(_)
                | Error::TooManyDims(_)
        )
    }
}
