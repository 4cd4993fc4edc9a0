use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] waveformer_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Audio or config files that are readable but not acceptable.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Bad command-line values, such as an unknown class name.
    #[error("{0}")]
    Usage(String),

    /// A verify run where at least one property failed.
    #[error("{0}")]
    PropertyFailed(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Short machine-readable category printed after `error:`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(waveformer_core::Error::InvalidArgument(_)) => "invalid-argument",
            Error::Core(waveformer_core::Error::Format { .. }) | Error::Format { .. } => "format",
            Error::Core(waveformer_core::Error::Validation(_)) => "validation",
            Error::Io { .. } => "io",
            Error::Usage(_) => "usage",
            Error::PropertyFailed(_) => "property-failed",
        }
    }

    /// Process exit status: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }

    /// The single line written to stderr, `error: <code>: <message>`.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error: {}: {msg}", self.code())
    }
}
