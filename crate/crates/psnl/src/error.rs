use std::io;
use std::path::PathBuf;

use psnl_core::{EvalError, SearchError, ShdiError, TrainError};

/// Errors from reading or writing one of the text formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Read(#[from] io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Header(String),
    #[error(transparent)]
    Data(#[from] ShdiError),
}

impl FormatError {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        FormatError::Syntax {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn at_path(path: &std::path::Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Failure of a CLI run; each class maps to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ShdiError> for CliError {
    fn from(e: ShdiError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } | TrainError::NonPositiveDenominator { .. } => {
                CliError::Divergence(e.to_string())
            }
            TrainError::InvalidHyperParam { .. } | TrainError::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::AllDiverged { .. } => CliError::Divergence(e.to_string()),
            SearchError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            SearchError::Train(t) => t.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(t) => t.into(),
            EvalError::Search(s) => s.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
