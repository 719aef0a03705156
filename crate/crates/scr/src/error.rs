use thiserror::Error;

/// Errors produced by construction, validation, and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("aggregation factor {factor} does not divide grid dimension {dim} = {value}")]
    NonDivisibleAggregation {
        factor: usize,
        dim: &'static str,
        value: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("covariance factorization failed even after diagonal jitter of {jitter:e}")]
    CholeskyFailed { jitter: f64 },

    #[error("Moran's I is undefined for constant input")]
    ConstantInput,

    #[error("diagnostic error: {0}")]
    Diagnostics(String),

    #[error("invalid model specification: {0}")]
    ModelSpec(String),

    #[error("non-finite log-posterior at initialization: {0}")]
    BadInit(String),

    #[error("file format error in {path}: {message}")]
    FileFormat { path: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
