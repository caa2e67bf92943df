use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates an operation's precondition (non-physical matrix,
    /// unstable drift matrix, singular measurement block, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical error: {message}{}", residual.map(|r| format!(" (residual estimate {r:.3e})")).unwrap_or_default())]
    Numerical {
        message: String,
        residual: Option<f64>,
    },

    /// A computed value violates a bound it must satisfy by construction.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// An error raised while processing one stage of a swap chain.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("unknown key `{key}`")]
    UnknownKey { key: String },

    #[error("refusing to write an empty result set")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            residual: None,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag, used in result-row status flags.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Numerical { .. } => "numerical",
            Error::Consistency(_) => "consistency",
            Error::Stage { source, .. } => source.code(),
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::UnknownKey { .. } => "unknown-key",
            Error::EmptyResults => "empty",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::UnknownKey { .. } => 2,
            Error::Io(_) | Error::EmptyResults => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Domain(_) | Error::Numerical { .. } | Error::Consistency(_) => 4,
        }
    }
}
