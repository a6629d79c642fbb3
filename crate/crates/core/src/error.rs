use thiserror::Error;

/// Errors produced by the solvers and the scenario loader.
#[derive(Debug, Error)]
pub enum Error {
    /// A slot's energy box cannot host the weighted-energy target.
    #[error("infeasible slot: {0}")]
    InfeasibleSlot(String),

    /// The restricted benchmark has no feasible point; the two-stage problem
    /// itself may still be feasible.
    #[error("restricted problem infeasible: {0}")]
    RestrictedInfeasible(String),

    /// The two-stage problem itself has no feasible pricing decision.
    #[error("exact problem infeasible: {0}")]
    ExactInfeasible(String),

    /// Shifting the background load by the worst-case error leaves no room
    /// for the required energy.
    #[error("infeasible after uncertainty shift: {0}")]
    InfeasibleAfterShift(String),

    /// A caller violated an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Bisection could not find a sign change after bracket expansion.
    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    /// The QP solver stopped without an optimality certificate.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// An incumbent did not reproduce as a genuine best response, even after
    /// enlarging the linearization constant.
    #[error("solution verification failed: {0}")]
    VerificationFailure(String),

    /// Scenario data violated one or more model invariants. Every violation
    /// is listed, not just the first.
    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
