use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value failed validation (bad configuration, inconsistent shapes).
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// A file could not be decoded.
    #[error("parse error at `{field}`: {reason}")]
    Parse { field: String, reason: String },

    #[error("exhaustive search limited to n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },

    /// An API precondition was broken by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged in epoch {epoch} (batch {batch}): loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for failures of the file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
