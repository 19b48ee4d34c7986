use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    /// Cholesky pivot at `pivot` was not strictly positive.
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    Singular { pivot: usize, value: f64 },

    #[error("label at index {index} is {value}, expected +1 or -1")]
    InvalidLabel { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("worker {index} failed: {source}")]
    Worker {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                found,
            })
        }
    }

    pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
        match values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { context, index }),
            None => Ok(()),
        }
    }
}
