use thiserror::Error;

pub type Result<T> = std::result::Result<T, NrbaError>;

#[derive(Debug, Error)]
pub enum NrbaError {
    /// A cell or record could not be parsed. `row` is 1-based and counts the header.
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no convergence after {iterations} iterations (last step norms: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("complete separation detected; divergent columns: {columns:?}")]
    Separation { columns: Vec<String> },
    #[error("singular information matrix; collinear columns: {columns:?}")]
    Singular { columns: Vec<String> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<NrbaError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NrbaError {
    pub fn context(self, context: impl Into<String>) -> Self {
        NrbaError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context layers stripped.
    pub fn root(&self) -> &NrbaError {
        match self {
            NrbaError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
