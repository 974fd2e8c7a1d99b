use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("jet capacity exceeded: {0} generators requested, at most 4")]
    Capacity(usize),
    #[error("unknown generator {0}")]
    UnknownGenerator(usize),
    #[error("division by a value with zero real part")]
    DivisionByZero,
    #[error("sqrt of non-positive value {0}")]
    NonPositiveSqrt(f64),
    #[error("log of non-positive value {0}")]
    NonPositiveLog(f64),
    #[error("real power of non-positive base {0}")]
    NonPositivePow(f64),
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("tangent vector outside the conic domain")]
    ConicDomain,
    #[error("fundamental tensor is degenerate (reciprocal condition {rcond:e})")]
    Degenerate { rcond: f64 },
    #[error("fundamental tensor not positive definite at t={t} (min eigenvalue {min_eig:e})")]
    Signature { t: f64, min_eig: f64 },
    #[error("trajectory left the domain at t={t}")]
    DomainExit { t: f64 },
    #[error("integration failed at t={t} (step {h:e})")]
    Integration { t: f64, h: f64 },
    #[error("lightlike geodesic: L vanishes")]
    Lightlike,
    #[error("geodesic not perpendicular to submanifold (residual {residual:e})")]
    NotPerpendicular { residual: f64 },
    #[error("point not on submanifold (distance {distance:e})")]
    NotOnSubmanifold { distance: f64 },
    #[error("fundamental tensor degenerate on the submanifold tangent space")]
    DegenerateSplitting,
    #[error("submanifold embedding has rank deficiency")]
    RankDeficient,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("mesh too small: {0} interior nodes, need at least 8")]
    MeshTooSmall(usize),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("no interior focal point")]
    NoInteriorFocal,
    #[error("focal point present at t={0}")]
    FocalPresent(f64),
    #[error("eigen solver failure: {0}")]
    Eigen(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
