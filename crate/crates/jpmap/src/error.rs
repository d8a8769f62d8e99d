use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported IDX dtype 0x{0:02x}")]
    UnsupportedDtype(u8),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("PGM maxval must be 255, found {0}")]
    BadMaxval(u32),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: &'static str },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint has latent dimension {found}, expected {expected}")]
    LatentMismatch { found: usize, expected: usize },
    #[error("no MNIST images found in {0}")]
    MissingData(PathBuf),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] jpmap_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> FormatError {
    let path = path.into();
    move |source| FormatError::Io { path, source }
}
