use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// A structured input could not be decoded. `location` names the byte
    /// offset or line where decoding stopped.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least two subjects")]
    TooFewSubjects,

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("near-degenerate eigengap between {axis} components {first} and {second}")]
    Eigengap {
        axis: &'static str,
        first: usize,
        second: usize,
    },

    #[error("nothing to test: P*K must be at least 2")]
    NothingToTest,

    #[error("degenerate Θ: trace {0} is not positive")]
    DegenerateTheta(f64),

    #[error("Σ not PD")]
    NotPositiveDefinite,

    #[error("bootstrap replicate {replicate} stayed rank deficient after {attempts} attempts")]
    DegenerateResample { replicate: usize, attempts: usize },

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
