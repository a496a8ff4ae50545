use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("delay {delay:e} s exceeds the frame duration {frame:e} s")]
    DelayOutOfFrame { delay: f64, frame: f64 },

    #[error("zero-magnitude symbol at ({row}, {col}) cannot be compensated")]
    ZeroSymbol { row: usize, col: usize },

    #[error("map of {rows}x{cols} cells is smaller than the CFAR window {win_rows}x{win_cols}")]
    MapTooSmall {
        rows: usize,
        cols: usize,
        win_rows: usize,
        win_cols: usize,
    },

    #[error("no correlation peak: input is identically zero")]
    NoSyncPeak,

    #[error("not enough pilots: {0}")]
    InsufficientPilots(String),

    #[error("equalizer gain is zero")]
    ZeroGain,

    #[error("distance to `{0}` is zero")]
    ZeroDistance(&'static str),

    #[error("structure `{0}` requires a track state")]
    MissingTrack(String),

    #[error("unknown structure `{0}`")]
    UnknownStructure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, IsacError>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> IsacError {
    IsacError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
