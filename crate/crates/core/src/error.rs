use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("split error: {0}")]
    Split(String),
    #[error("test-set assembly error: {0}")]
    Assembly(String),
    #[error("clustering error: {0}")]
    Clustering(String),
    #[error("graphon estimation error: {0}")]
    Estimation(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("outlier pool error: {0}")]
    Pool(String),
    #[error("feature alignment error: {0}")]
    Alignment(String),
    #[error("outlier synthesis error: {0}")]
    Synthesis(String),
    #[error("model initialization error: {0}")]
    Init(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("training aborted: {0}")]
    Training(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Training(_) | Error::Domain(_))
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
