use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape is unbounded or has non-finite parameters")]
    Unbounded,

    #[error("shape is empty")]
    EmptyShape,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("exponent p = {0} outside [1, 2)")]
    ExponentOutOfRange(f64),

    #[error("nonsmooth point; use continuation (p = 1 requires smoothing eps > 0)")]
    Nonsmooth,

    #[error("support leaves the target box: {0}")]
    SupportOutsideTarget(String),

    #[error("support touches the clearance margin; increase box")]
    IncreaseBox,

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("mountain pass degenerated: {0}")]
    MountainPassDegenerated(String),

    #[error("no sign-changing critical point found: {0}")]
    NoNodalSolution(String),

    #[error("domain is not invariant under the requested symmetry")]
    NotSymmetric,

    #[error("constraint manifold never reached: {0}")]
    ConstraintUnreachable(String),

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("unknown suite tier `{0}`")]
    UnknownTier(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
