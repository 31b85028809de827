use std::path::PathBuf;

/// Failure of a file-level operation. Every variant renders as one line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] semsplat_core::Error),
    #[error("format error in {what} at byte {offset}: {reason}")]
    Format { what: &'static str, offset: u64, reason: String },
    #[error("io error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid json in {}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
    /// Field diagnostics were found; carries their count.
    #[error("{0} diagnostics")]
    Invalid(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Process exit code: 1 validation, 2 format or io, 3 usage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(_) | Error::Invalid(_) => 1,
            Error::Format { .. } | Error::Io { .. } | Error::Json { .. } => 2,
            Error::Usage(_) => 3,
        }
    }

    /// Stable short tag for the first field of the stderr line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) | Error::Invalid(_) => "validation",
            Error::Format { .. } | Error::Json { .. } => "format",
            Error::Io { .. } => "io",
            Error::Usage(_) => "usage",
        }
    }
}
