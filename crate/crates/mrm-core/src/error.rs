use std::path::PathBuf;

/// Error type shared across the crate. The variant name doubles as the
/// machine-parsable error class printed by the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("argument: {0}")]
    Argument(String),

    #[error("dimension: {0}")]
    Dimension(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error("config: {0}")]
    Config(String),

    #[error("validation: {0}")]
    Validation(String),

    /// Two artifacts disagree on architecture (e.g. checkpoint vs. model config).
    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("internal: {0}")]
    Internal(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in a manifest failed to load; carries the 1-based line number.
    #[error("record: line {line}: {message}")]
    Record { line: usize, message: String },
}

impl Error {
    /// Stable lowercase class name for machine-readable CLI output.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Dimension(_) => "dimension",
            Error::Parse(_) => "parse",
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Incompatible(_) => "incompatible",
            Error::Internal(_) => "internal",
            Error::Io { .. } => "io",
            Error::Record { .. } => "record",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
