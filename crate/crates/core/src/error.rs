use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MfgError {
    #[error("degenerate profile: population {pop} has beta*K/2 = {value} >= 1")]
    DegenerateProfile { pop: usize, value: f64 },
    #[error("iteration limit reached after {iterations} iterations (last residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },
    #[error("iterate coordinate {index} became zero; operator looks reducible, try shift mode")]
    NonPositiveIterate { index: usize },
    #[error("dimension {dim} exceeds the dense size limit {limit}")]
    SizeLimit { dim: usize, limit: usize },
    #[error("r = {r} outside the admissible interval ({lo}, {hi})")]
    DomainError { r: f64, lo: f64, hi: f64 },
    #[error("empty interval: {0}")]
    EmptyInterval(String),
    #[error("majorization violated at coordinate {index}: excess {excess:e}")]
    MajorizationViolation { index: usize, excess: f64 },
    #[error("not stable: {0}")]
    NotStable(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, MfgError>;
