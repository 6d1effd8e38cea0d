use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or scenario description is invalid. `field` is a dotted path
    /// into the configuration (for example `schedules.mu`).
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// The implicit NSFD update failed to produce a state satisfying the
    /// balance identity.
    #[error("implicit step {step} failed: {message} (residual {residual:e})")]
    Step {
        step: usize,
        residual: f64,
        message: String,
    },

    #[error("period map is singular: {0}")]
    Singular(String),

    #[error("parameters are not periodic with step period {0}")]
    NotPeriodic(usize),

    /// Precondition of a theorem-backed computation does not hold.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    /// Whether the error stems from user input rather than a numerical failure.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Parse { .. } | Error::Domain(_) | Error::NotPeriodic(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
