//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. Names the offending field.
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    /// Two frames that must be processed in lockstep have different lengths.
    #[error("frame length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// The synchronizer popped a d/y frame pair that does not line up.
    #[error("stream misaligned at pair {pair}: {reason}")]
    Alignment { pair: u64, reason: String },

    /// A pending-frame queue exceeded its cap; the stream is backed up.
    #[error("synchronizer queue overflow on side {side}: cap {cap} frames exceeded")]
    QueueOverflow { side: &'static str, cap: usize },

    /// Group-delay offset does not fit inside one frame.
    #[error("group-delay offset {offset} out of range for frame length {frame_len}")]
    OffsetTooLarge { offset: i64, frame_len: usize },

    /// Waveform file did not parse.
    #[error("waveform format error in {path}: {reason}")]
    WaveformFormat { path: String, reason: String },

    /// Requested a stream tap that was not recorded.
    #[error("unknown column: {0}")]
    UnknownColumn(String),

    /// CSV export was asked for zero columns.
    #[error("no columns selected for export")]
    EmptyColumns,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid_config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by a bad user-supplied configuration, as
    /// opposed to runtime failures; the CLI maps these to exit code 1.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
