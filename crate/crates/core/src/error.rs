use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped so that front-ends can map them onto stable exit
/// codes: input/precondition problems, infeasible synthesis, and numerical
/// failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("graph is not bidirected: edge {0} has no reverse edge")]
    NotBidirected(usize),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("state lies on the boundary of the simplex (min coordinate {min:.3e}); boundary points cannot be reached or used in finite time")]
    BoundaryState { min: f64 },

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative transition rate {rate:.3e} on edge {edge}")]
    NegativeRate { edge: usize, rate: f64 },

    #[error("trajectory left the interior of the simplex at t = {t:.6} (min coordinate {min:.3e})")]
    InteriorViolation { t: f64, min: f64 },

    #[error("structured LMI infeasible (best margin {margin:.3e})")]
    Infeasible { margin: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("per-step transition probability overflow: {0}")]
    StepOverflow(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
