use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),
    #[error("seed compatibility violated: {0}")]
    SeedCompatibility(String),
    #[error("seed is not sign-definite: {0}")]
    SeedSign(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("normalization failed: {0}")]
    Normalization(String),
    #[error("search failed: {0}")]
    SearchFailure(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("unsupported measure class: {0}")]
    UnsupportedClass(String),
    #[error("point is outside the transport set: {0}")]
    OutOfTransportSet(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
