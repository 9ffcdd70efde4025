use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation requested exactly at a singular point of a map.
    #[error("singularity: {0}")]
    Singularity(String),

    /// The massless particle reached (or crossed the guard band of) a primary.
    #[error("collision: {0}")]
    Collision(String),

    /// On the sphere, the particle reached the antipode of a primary.
    /// Antipodal singularities are terminal; they are not regularized.
    #[error("antipodal singularity: {0}")]
    Antipodal(String),

    /// The polynomial root solver did not converge.
    #[error("root solver failed to converge: {0}")]
    Convergence(String),

    /// Two chart preimages are equidistant from the branch hint.
    #[error("ambiguous branch selection: {0}")]
    Ambiguity(String),

    /// The adaptive integrator needed a step below `h_min`.
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
