//! Crate-wide error type. Warnings (truncation, positivity, conditioning)
//! are *not* errors; they travel as data attached to results.

/// Errors shared by all modules.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operands with incompatible dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Paired sequences of different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A state or distribution failed its normalization contract.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// Probabilities that must sum to one do not.
    #[error("probability sum error: {0}")]
    ProbabilitySum(String),

    /// Integrator step size exceeds the resolution bound for the problem.
    #[error("step-size violation: {0}")]
    StepSize(String),

    /// Iterative solver hit its iteration cap without meeting tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Problem data cannot determine a solution (e.g. too few grid points).
    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    /// A parabola fit opened the wrong way; no interior minimum exists.
    #[error("concavity error: {0}")]
    Concavity(String),

    /// Peak search on effectively flat data.
    #[error("no peak: {0}")]
    NoPeak(String),
}

pub type Result<X> = std::result::Result<X, Error>;
