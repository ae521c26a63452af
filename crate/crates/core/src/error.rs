use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The shift `c_k` (index `index`) puts the wavelet support outside the record.
    #[error("boundary error at shift {index}: support [{lo:.6}, {hi:.6}] not inside [0, {span:.6}]")]
    Boundary {
        index: usize,
        lo: f64,
        hi: f64,
        span: f64,
    },

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("factorization error: {0}")]
    Factorization(String),

    #[error("circulant embedding error: {0}")]
    Embedding(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("experiment failed: {failed} of {total} replications errored (first: {first})")]
    Replications {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
