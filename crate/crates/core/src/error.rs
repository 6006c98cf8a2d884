use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("target error {target} is not reached by the curve")]
    UnreachableTarget { target: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
