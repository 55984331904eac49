//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("zero vector where a direction was required")]
    ZeroVector,

    #[error("direction has a collision (flat norm is zero)")]
    CollisionDirection,

    #[error("input outside the admissible domain: {0}")]
    InputDomain(String),

    #[error("invalid potential parameters: {0}")]
    InvalidPotential(String),

    #[error("singular potential evaluation: bodies {i} and {j} at separation {separation:.3e}")]
    SingularEvaluation { i: usize, j: usize, separation: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("degenerate path: all nodes coincide")]
    DegeneratePath,

    #[error("identical endpoints: geodesic between equal configurations is empty")]
    IdenticalEndpoints,

    #[error("collision obstruction: no collision-free initial path found (min separation {0:.3e})")]
    CollisionObstruction(f64),

    #[error("envelope series diverges over the requested dyadic range")]
    EnvelopeDivergence,

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("collision stop at t = {t:.6e}: bodies {i} and {j} at separation {separation:.3e}")]
    CollisionStop { t: f64, i: usize, j: usize, separation: f64 },

    #[error("step size underflow at t = {0:.6e}")]
    StepUnderflow(f64),

    #[error("radius {0:.3e} never attained along the run")]
    RadiusNotAttained(f64),

    #[error("requirement not met: {0}")]
    Unmet(String),
}
