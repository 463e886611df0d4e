use nrba::NrbaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] NrbaError),
    #[error("{0}")]
    Usage(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(NrbaError::Io(e))
    }
}

impl CliError {
    /// 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => core_code(e),
        }
    }
}

fn core_code(e: &NrbaError) -> i32 {
    match e {
        NrbaError::Config(_) | NrbaError::Schema(_) => 2,
        NrbaError::Parse { .. } | NrbaError::Data(_) | NrbaError::Io(_) => 3,
        NrbaError::NonConvergence { .. } | NrbaError::Separation { .. } | NrbaError::Singular { .. } | NrbaError::Numerical(_) => 4,
        NrbaError::Context { source, .. } => core_code(source),
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
