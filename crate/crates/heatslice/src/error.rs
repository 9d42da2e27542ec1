use thiserror::Error;

use crate::kernels::ConvergenceTable;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0:?} is a coordinate singularity of the chart")]
    SingularPoint(Vec<f64>),
    #[error("metric is not positive definite at {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("no unique minimal geodesic from {from:?} to {to:?} (distance {distance})")]
    NoUniqueGeodesic { from: Vec<f64>, to: Vec<f64>, distance: f64 },
    #[error("geodesic shooting did not converge after {iterations} iterations (residual {residual:e})")]
    ShootingFailed { iterations: usize, residual: f64 },
    #[error("chart domain exceeded: needs radius {needed}, chart is valid up to {available}")]
    ChartDomainExceeded { needed: f64, available: f64 },
    #[error("grid resolution {0:?} too small (need at least 2 nodes per axis)")]
    ResolutionTooSmall(Vec<usize>),
    #[error("kernels live on different quadrature grids")]
    GridMismatch,
    #[error("kernels use different cutoffs ({0} vs {1})")]
    CutoffMismatch(f64, f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not antisymmetric (defect {0:e})")]
    NotAntisymmetric(f64),
    #[error("commutant residual {residual:e} exceeds tolerance {tol:e}")]
    CommutantResidual { residual: f64, tol: f64 },
    #[error("dimension {0} is odd; an even dimension is required")]
    OddDimension(usize),
    #[error("fiber carries no grading")]
    UngradedFiber,
    #[error("scale r = {0} outside (0, 1]")]
    ScaleOutOfRange(f64),
    #[error("matrix exponential failed: {0}")]
    MatrixExp(String),
    #[error("time quadrature failed: {0}")]
    TimeQuadrature(String),
    #[error("partition refinement diverged:\n{0}")]
    Divergence(ConvergenceTable),
    #[error("specs differ on the localization ball: {0}")]
    BallMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
