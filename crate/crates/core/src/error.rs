use thiserror::Error;

/// Errors shared across the crate. Variant names follow the contract each
/// operation documents.
#[derive(Debug, Error)]
pub enum Error {
    /// An iterative routine failed to converge within its iteration cap.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A matrix required to be (nearly) positive semidefinite has an
    /// eigenvalue below the clamping tolerance.
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:e} below -{tol:e}")]
    NotPsd { min_eig: f64, tol: f64 },

    /// A matrix required to be positive definite is singular or indefinite.
    #[error("matrix is not positive definite: min eigenvalue {0:e}")]
    NotPd(f64),

    /// A vector is not in the row span of the maintained right matrix.
    #[error("vector not in span: projection residual {residual:e} exceeds {tol:e}")]
    NotInSpan { residual: f64, tol: f64 },

    /// A sequential state machine was driven after it terminated.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An input violated a documented precondition.
    #[error("bad input: {0}")]
    BadInput(String),

    /// A semi-dynamic universe contract was violated (re-insertion after
    /// deletion, overlapping universes, and similar).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Privacy parameters outside the admissible range.
    #[error("privacy budget violation: {0}")]
    BudgetViolation(String),

    /// A brute-force enumeration would exceed its configured guard.
    #[error("scale guard exceeded: {0} > {1}")]
    ScaleGuard(u128, u128),

    /// The self-balancing walk observed the low-probability bad event.
    #[error("self-balancing walk failed: |<w,v>| = {0:e} exceeds c = {1:e}")]
    WalkFailed(f64, f64),

    /// An inner pipeline failed in a way the caller cannot recover from.
    #[error("pipeline error: {0}")]
    PipelineError(String),

    /// An interactive analyst callback failed or returned malformed data.
    #[error("analyst error: {0}")]
    AnalystError(String),

    /// A workload specification is inconsistent.
    #[error("bad workload spec: {0}")]
    BadSpec(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
