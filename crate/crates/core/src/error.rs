use thiserror::Error;

/// Errors raised across the library. The `Display` forms carry the short
/// machine-readable tags used by the CLI reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("outside-domain: point ({0}, {1}) is not in the closed domain")]
    OutsideDomain(f64, f64),

    #[error("grid-too-large: {cells} cells exceeds the budget of {budget}")]
    GridTooLarge { cells: u64, budget: u64 },

    #[error("insufficient-resolution: {requested} levels requested, grid supports {available}")]
    InsufficientResolution { requested: u32, available: u32 },

    #[error("insufficient-vanishing-moments: wavelet order {order} must exceed smoothness {smoothness}")]
    InsufficientVanishingMoments { order: usize, smoothness: f64 },

    #[error("bracketing-failed: found {found} of {wanted} roots in [{lo}, {hi}]")]
    BracketingFailed {
        found: usize,
        wanted: usize,
        lo: f64,
        hi: f64,
    },

    #[error("contraction-failed: measured contraction factor q = {q}")]
    ContractionFailed { q: f64 },

    #[error("not-converged: {iterations} iterations, last residual {residual}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("hypothesis-violated: {0}")]
    HypothesisViolated(String),

    #[error("nonpositive-error: fit window contains error {0}")]
    NonPositiveError(f64),

    #[error("solve-failed: {0}")]
    SolveFailed(String),

    #[error("invalid-parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid-geometry: {0}")]
    InvalidGeometry(String),

    #[error("metadata-only: {0}")]
    MetadataOnly(&'static str),

    #[error("parse: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
