//! Errors of the command-line layer and their stable exit codes.

use std::path::{Path, PathBuf};

use facsel_core::Error as CoreError;

/// Exit status for scripting: 0 success, 1 usage or parse error,
/// 2 model or identification failure, 3 numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Model = 2,
    Numerical = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed input file; `location` is `line L, column C` or a field path.
    #[error("{path}: {location}: {message}")]
    Parse { path: PathBuf, location: String, message: String },
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Numerical(String),
    /// A pipeline stage failed.
    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<CliError> },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), location: location.into(), message: message.into() }
    }

    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        CliError::Core { context: context.into(), source }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Parse { .. } => ExitCode::Usage,
            CliError::Model(_) => ExitCode::Model,
            CliError::Numerical(_) => ExitCode::Numerical,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core { source, .. } => core_exit_code(source),
        }
    }
}

fn core_exit_code(e: &CoreError) -> ExitCode {
    match e {
        CoreError::Parse(_) | CoreError::Bind(_) | CoreError::InvalidConfig(_) | CoreError::InvalidData(_) => {
            ExitCode::Usage
        }
        CoreError::Dimension(_)
        | CoreError::ConstantColumn { .. }
        | CoreError::InvalidModel(_)
        | CoreError::StandardizedDataRequired
        | CoreError::ChainMismatch(_) => ExitCode::Model,
        CoreError::NotPositiveDefinite
        | CoreError::DegenerateConditional { .. }
        | CoreError::DivergentChain { .. }
        | CoreError::DegenerateOrdinate
        | CoreError::TrainingSizeTooSmall { .. }
        | CoreError::NoAdmissibleDimensionality => ExitCode::Numerical,
    }
}

pub type CliResult<T> = Result<T, CliError>;
