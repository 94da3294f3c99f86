use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A loss parameter is outside its domain (γ < 1, non-finite input, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Two rasters that must share a shape do not.
    #[error("shape mismatch: {expected_w}x{expected_h} vs {got_w}x{got_h}")]
    ShapeMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    /// An operation that averages over valid pixels found none.
    #[error("no valid pixels")]
    NoValidPixels,

    /// A discrete depth mixture violates its invariants.
    #[error("invalid ambiguity model: {0}")]
    InvalidModel(String),

    /// LiDAR row count not in {0, 8, 16, 32, 64}.
    #[error("invalid ring count {0}: must be 0, 8, 16, 32 or 64")]
    InvalidRows(u32),

    /// A configuration value fails validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed PGM data.
    #[error("pgm error: {0}")]
    Pgm(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
