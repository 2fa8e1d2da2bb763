use thiserror::Error;

/// Errors raised by the scoring library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {context} (left {left}, right {right})")]
    DimensionMismatch { context: &'static str, left: usize, right: usize },

    #[error("index {index} out of range for dataset of {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate index {0} in selection")]
    DuplicateIndex(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires category tags but the dataset has none")]
    MissingTags,

    #[error("category {0} is present in the test set but absent from the training set")]
    MissingCategory(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("joint posterior undefined: combined precision has smallest eigenvalue {min_eigenvalue:e}")]
    JointPosteriorUndefined { min_eigenvalue: f64 },

    #[error("MAP fit did not converge in {iterations} iterations (gradient inf-norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("numerical underflow: every sampled log-likelihood is -inf")]
    NumericalUnderflow,

    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("EMB1 format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True when the inputs are at fault, false for numerical failures during a run.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Pair { source, .. } => source.is_input_error(),
            Error::NotPositiveDefinite(_)
            | Error::JointPosteriorUndefined { .. }
            | Error::NotConverged { .. }
            | Error::NonFinite(_)
            | Error::NumericalUnderflow => false,
            _ => true,
        }
    }
}
