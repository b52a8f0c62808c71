use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data (signals, sequences, maps) has the wrong shape or length.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("bad magic in frame cube: expected \"VIBE\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported frame cube version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated frame cube: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("failed to parse config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("acquisition failed: {0}")]
    Acquisition(String),

    #[error("actuator refused move: {0}")]
    Actuator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
