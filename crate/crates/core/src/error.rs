use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KfpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypoellipticity violated at t = {t}: min eigenvalue {min_eig:e}")]
    Hypoellipticity { t: f64, min_eig: f64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("ill-conditioned importance sampler: {0}")]
    IllConditionedSampler(String),
    #[error("divergent potential: alpha = {alpha} is not below the dimension at infinity {dinf:.3}")]
    DivergentPotential { alpha: f64, dinf: f64 },
    #[error("insufficient cutoff: tail bound {bound:e} exceeds tolerance {tol:e}")]
    InsufficientCutoff { bound: f64, tol: f64 },
    #[error("order out of range: {0}")]
    Range(String),
    #[error("contradiction: {0}")]
    Contradiction(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("trace condition tr B >= 0 required, got tr B = {0}")]
    TraceCondition(f64),
}

pub type Result<T> = std::result::Result<T, KfpError>;
