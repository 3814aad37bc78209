use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cell geometry: {0}")]
    InvalidCell(String),

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("unmatched periodic sides: {0}")]
    UnmatchedPeriodic(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("unknown boundary tag `{0}` on this mesh")]
    UnknownTag(String),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (curvature {curvature:e} at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("inconsistent right-hand side for a singular system: mean {mean:e}, norm {norm:e}")]
    InconsistentRhs { mean: f64, norm: f64 },

    #[error("newton did not converge after {iterations} iterations (residual trace {trace:?})")]
    NewtonNotConverged { iterations: usize, trace: Vec<f64> },

    #[error("homogenized tensor check failed: {0}")]
    Tensor(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("at epsilon = {epsilon}: {source}")]
    Solver { epsilon: f64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for numerical failures (as opposed to bad input or I/O).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::CgNotConverged { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::InconsistentRhs { .. }
            | Error::NewtonNotConverged { .. }
            | Error::Tensor(_) => true,
            Error::Solver { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
