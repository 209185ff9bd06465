use std::path::PathBuf;

use labdx_core::Error as CoreError;

/// Failure of a command, grouped by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::ArchitectureMismatch { .. }
            | CoreError::InvalidRate(_) => CliError::Config(msg),
            CoreError::NonFinite(_)
            | CoreError::NanLoss { .. }
            | CoreError::Diverged { .. }
            | CoreError::NanGradient(_) => CliError::Numeric(msg),
            CoreError::ShapeMismatch { .. }
            | CoreError::UnknownToken { .. }
            | CoreError::TestOutOfRange { .. }
            | CoreError::InvalidLabel { .. }
            | CoreError::MissingLabel(_)
            | CoreError::LengthMismatch { .. }
            | CoreError::TooFew { .. }
            | CoreError::InvalidSequence(_) => CliError::Data(msg),
        }
    }
}
