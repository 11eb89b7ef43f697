use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("input contains no observations")]
    EmptyInput,

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid covariance parameters: {0}")]
    InvalidParams(String),

    #[error("sensor contrasts are not identifiable: no {missing} observations")]
    NotIdentifiable { missing: &'static str },

    #[error("design matrix is rank deficient; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("covariance factorization failed at ordered position {position}")]
    Factorization { position: usize },

    #[error("dense covariance factorization failed: {0}")]
    DenseFactorization(String),

    #[error("{0}")]
    TooLarge(String),

    #[error("fit requires at least {required} observations, got {got}")]
    TooFewObservations { got: usize, required: usize },

    #[error("response has zero residual variance after removing the trend")]
    DegenerateResponse,

    #[error("log-likelihood could not be evaluated at the starting values ({0}); try different starting values")]
    BadStart(Box<Error>),

    #[error("no collocated pairs")]
    NoCollocations,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
