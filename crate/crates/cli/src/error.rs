use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing {}: {hint}", .artifact.display())]
    StageOrder { artifact: PathBuf, hint: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] sigver::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 1 validation, 2 runtime, 3 failed gradient check.
    pub fn exit_code(&self) -> i32 {
        use sigver::Error as E;
        match self {
            CliError::Validation(_) | CliError::StageOrder { .. } => 1,
            CliError::Core(E::Config(_) | E::Protocol(_) | E::Format(_) | E::Report(_)) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
            CliError::GradCheck(_) => 3,
        }
    }
}
