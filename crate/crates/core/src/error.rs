use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input violates a structural invariant (shape, symmetry, sign pattern).
    #[error("structural error: {0}")]
    Structural(String),

    /// Invalid or unsupported configuration (priors, weights, scenario fields).
    #[error("configuration error: {0}")]
    Config(String),

    /// Bayesian information matrix is singular.
    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    /// Argument outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The SINR targets cannot be met within the power budget.
    /// `certificate` holds dual multipliers whose weighted noise exceeds the budget
    /// (or a normalized ray when the targets are unattainable at any power).
    #[error("infeasible: {reason}")]
    Infeasible { reason: String, certificate: Vec<f64> },

    /// Downlink weighted-power problem is unbounded below for the given multiplier pair.
    #[error("unbounded: {0}")]
    Unbounded(String),

    /// Numerical solver failed to converge or broke down.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A precondition that the caller must certify was not met.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
