use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("underdetermined tangent: {found} neighbors, need {needed}")]
    UnderdeterminedTangent { found: usize, needed: usize },
    #[error("degenerate neighborhood covariance")]
    DegenerateTangent,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("point outside every cylinder")]
    OutOfDomain,
    #[error("zero partition denominator")]
    DegenerateCover,
    #[error("spectral gap {gap:.3e} below tolerance {tol:.3e}")]
    InsufficientGap { gap: f64, tol: f64 },
    #[error("newton iterate left the domain")]
    EscapedDomain,
    #[error("no convergence after {0} steps")]
    NoConvergence(usize),
    #[error("every seed failed; mesh is empty")]
    EmptyMesh,
    #[error("bundle decomposition failed: {0}")]
    DecompositionFailed(String),
    #[error("all contributing sections are empty")]
    AllSectionsEmpty,
    #[error("duplicate site at index {0}")]
    DuplicateSite(usize),
    #[error("solver budget of {budget} iterations exceeded (best objective {best:.6e})")]
    BudgetExceeded { budget: usize, best: f64 },
    #[error("no valid packet found:\n{0}")]
    NoValidPacket(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
