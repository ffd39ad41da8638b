use std::path::PathBuf;

use cbss::BssError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {reason}", path.display())]
    Unreadable { path: PathBuf, reason: String },
    #[error("unsupported audio format in {}: {detail}", path.display())]
    Codec { path: PathBuf, detail: String },
    #[error("{0}")]
    Shape(String),
    #[error("input has {0} channel(s); separation needs at least two")]
    Mono(usize),
    #[error("solver diverged at iteration {0}")]
    Divergence(usize),
    #[error("cannot write {}: {reason}", path.display())]
    Output { path: PathBuf, reason: String },
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Core(BssError),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreadable { .. } | CliError::Codec { .. } => 2,
            CliError::Shape(_) | CliError::Mono(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Output { .. } | CliError::Check(_) | CliError::Core(_) => 1,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, err: impl ToString) -> Self {
        CliError::Output { path: path.into(), reason: err.to_string() }
    }
}

impl From<BssError> for CliError {
    fn from(e: BssError) -> Self {
        match e {
            BssError::Mono(n) => CliError::Mono(n),
            BssError::Divergence { iteration } => CliError::Divergence(iteration),
            BssError::Dimension(msg) => CliError::Shape(msg),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
