//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by calibration, scoring, charting and persistence.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("empty calibration")]
    EmptyCalibration,

    #[error("subgroup too small: need at least 2 values, got {0}")]
    SubgroupTooSmall(usize),

    #[error("non-finite value {value} at position {position}")]
    NonFinite { position: usize, value: f64 },

    #[error("negative score {0}")]
    NegativeScore(f64),

    #[error("invalid alpha {0}: must lie strictly between 0 and 1")]
    InvalidAlpha(f64),

    #[error("model output invalid: {0}")]
    ModelOutputInvalid(f64),

    #[error("invalid spread estimate: {0}")]
    InvalidSpread(f64),

    #[error("split too extreme: fraction {fraction} of {len} items leaves an empty partition")]
    SplitTooExtreme { fraction: f64, len: usize },

    #[error("need \u{2265}2 points for std, got {0}")]
    NeedTwoPoints(usize),

    #[error("calibration mismatch: archive scorer `{expected}`, got `{found}`")]
    CalibrationMismatch { expected: String, found: String },

    #[error("k too large: k={k} but only {available} training vectors")]
    KTooLarge { k: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular covariance")]
    SingularCovariance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nothing to render")]
    NothingToRender,

    #[error("chart kind requires {0} archive")]
    ChartRequires(&'static str),

    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u64),

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("unknown predictive model `{0}`: attach it before loading")]
    UnknownModel(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
