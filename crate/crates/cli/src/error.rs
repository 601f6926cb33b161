use std::path::PathBuf;

use lens_core::LensError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Every problem found in a configuration, reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("cannot parse {path}: {message}")]
    ConfigSyntax { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] LensError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Validation(vec![message.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::ConfigSyntax { .. } => exit::VALIDATION,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                LensError::Usage(_) => exit::VALIDATION,
                LensError::NumericAbort { .. } => exit::NUMERIC,
                LensError::Io { .. } => exit::IO,
                LensError::Data(_)
                | LensError::Parse { .. }
                | LensError::Lookup(_)
                | LensError::UndefinedMetric(_)
                | LensError::Dimension { .. }
                | LensError::Serde(_) => exit::DATA,
            },
        }
    }
}
