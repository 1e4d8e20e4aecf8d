use thiserror::Error;

/// Errors raised by loaders, solvers and metrics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite or invalid numeric value: {0}")]
    Numeric(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("object order mismatch: {0}")]
    Alignment(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical divergence after {iterations} iterations: {detail}")]
    NumericalDivergence { iterations: usize, detail: String },

    #[error("sweep failed: {0}")]
    SweepFailed(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalDivergence { .. }
                | Error::SweepFailed(_)
                | Error::TrainingDiverged { .. }
                | Error::SearchFailed(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
