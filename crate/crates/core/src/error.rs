use thiserror::Error;

/// Failures raised by the single-agent DDP solver.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DdpError {
    #[error("Q_uu is not positive definite at step {step} (regularization {reg:e})")]
    NotPositiveDefinite { step: usize, reg: f64 },
    #[error("non-finite state during rollout at step {step}")]
    NonFinite { step: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("line search and regularization exhausted without a finite rollout")]
    Diverged,
}

/// Errors from the dense QP solver.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QpError {
    #[error("QP constraints are infeasible")]
    Infeasible,
    #[error("QP hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("active-set iteration limit reached")]
    IterationLimit,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Errors from constraint construction and linearization.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConstraintError {
    #[error("degenerate linearization: reference points coincide at step {step}")]
    Degenerate { step: usize },
    #[error("invalid constraint: {0}")]
    Invalid(String),
}

/// Errors from graph construction and message delivery.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetworkError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("message from agent {from} to agent {to} does not follow a graph edge")]
    NonEdge { from: usize, to: usize },
}

/// Configuration validation failure carrying every detected problem.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ValidationError(pub Vec<String>);

/// Top-level error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ddp(#[from] DdpError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

impl Error {
    /// True when the error comes from input validation rather than a solver.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Parse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
