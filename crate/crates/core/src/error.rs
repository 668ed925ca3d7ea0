use thiserror::Error;

/// Errors raised by space construction, kernel evaluation and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("distance matrix is not symmetric at ({i}, {j}): {dij} vs {dji}")]
    Asymmetric { i: usize, j: usize, dij: f64, dji: f64 },

    #[error("distance matrix has invalid entry at ({i}, {j}): {value}")]
    InvalidEntry { i: usize, j: usize, value: f64 },

    #[error("triangle inequality violated at ({i}, {j}, {k}): d(i,k)={dik} > d(i,j)+d(j,k)={via}")]
    TriangleViolation {
        i: usize,
        j: usize,
        k: usize,
        dik: f64,
        via: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{op} requires a 1D interval space; {hint}")]
    NotInterval { op: &'static str, hint: &'static str },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at point {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("optimizer did not converge after {iterations} iterations (relative gap {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a module-qualified prefix.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
