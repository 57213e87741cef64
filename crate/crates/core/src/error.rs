use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no frames in {0}")]
    NoFrames(PathBuf),
    #[error("{path}: malformed frame: {reason}")]
    MalformedFrame { path: PathBuf, reason: String },
    #[error("{path}: frame is {got:?} but clip frames are {expected:?} (width, height, channels)")]
    InconsistentDimensions {
        path: PathBuf,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame {width}x{height} is smaller than the required {min}x{min}")]
    FrameTooSmall { width: usize, height: usize, min: usize },
    #[error("window at ({x:.2}, {y:.2}) does not fit inside the frame")]
    WindowOutsideFrame { x: f64, y: f64 },
    #[error("point ({x:.3}, {y:.3}) lies outside the field")]
    OutOfBounds { x: f64, y: f64 },
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("epipole ({x:.1}, {y:.1}) lies inside the image; rectification degenerates")]
    EpipoleInsideImage { x: f64, y: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of a numerical procedure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_) | Error::EpipoleInsideImage { .. } | Error::Numeric(_)
        )
    }
}
