use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes, lengths or parameters that an operation cannot accept.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed checkpoint bytes. `offset` is where decoding stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A tensor set that does not match the architecture. Lists every offender.
    #[error("checkpoint validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}
