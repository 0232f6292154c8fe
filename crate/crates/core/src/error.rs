use thiserror::Error;

/// Library error type. Variants are grouped by failure class so callers can
/// map them onto coarse exit codes: invalid inputs/configuration vs numerical
/// breakdown vs I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("vertex {0} has zero degree (disconnected under this affinity)")]
    DisconnectedVertex(usize),

    #[error("matrix is not symmetric: max |A - A^T| entry = {max_dev:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_dev: f64, tol: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance is singular; increase ridge regularization")]
    SingularCovariance,

    #[error("degenerate result: {0}")]
    DegenerateResult(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of numerical routines on structurally valid input,
    /// as opposed to invalid inputs, configuration, or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry(_)
                | Error::DisconnectedVertex(_)
                | Error::NotSymmetric { .. }
                | Error::Eigensolver(_)
                | Error::SingularCovariance
                | Error::DegenerateResult(_)
        )
    }
}
