use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("sidecar {path} is missing required field `{field}`")]
    MissingSidecarField { path: PathBuf, field: &'static str },

    #[error("sidecar {path}: {message}")]
    InvalidSidecar { path: PathBuf, message: String },

    #[error("unsupported CFA pattern `{0}` (only RGGB is supported)")]
    UnsupportedPattern(String),

    #[error("frame dimensions {width}x{height} are not even")]
    OddDimensions { width: usize, height: usize },

    #[error("unsupported bit depth in {path}: expected 16-bit single channel, found {found}")]
    UnsupportedBitDepth { path: PathBuf, found: String },

    #[error("burst is empty")]
    EmptyBurst,

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("burst has {count} frames, more than the cap of {cap}")]
    TooManyFrames { count: usize, cap: usize },

    #[error("base index {index} out of range for a burst of {len} frames")]
    InvalidBaseIndex { index: usize, len: usize },

    #[error("offset ({dx:.3}, {dy:.3}) exceeds the limit of {limit:.1} px")]
    OffsetTooLarge { dx: f64, dy: f64, limit: f64 },

    #[error(
        "{levels} pyramid levels requested but a {width}x{height} image supports at most {max}"
    )]
    TooManyLevels {
        levels: usize,
        width: usize,
        height: usize,
        max: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem or unreadable files rather
    /// than by the contents of otherwise valid inputs.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Image { .. }
                | Error::MissingSidecarField { .. }
                | Error::InvalidSidecar { .. }
                | Error::UnsupportedBitDepth { .. }
                | Error::Csv { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
