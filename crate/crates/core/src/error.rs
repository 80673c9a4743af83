use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("boundary resolution too coarse: need at least 4 nodes per angular direction, got {0}x{1}")]
    DegenerateResolution(usize, usize),
    #[error("singular kernel: evaluation point coincides with a source point")]
    SingularKernel,
    #[error("boundary data violates the zero-flux compatibility condition: relative flux {flux:.3e}")]
    FluxIncompatible { flux: f64 },
    #[error("collocation system rank deficient beyond the regularization threshold (condition estimate {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("elementary velocity index {0} out of range 1..=6")]
    IndexOutOfRange(usize),
    #[error("resistance matrix asymmetry {asymmetry:.3e} exceeds bound {bound:.3e}: discretization too coarse")]
    AsymmetryBound { asymmetry: f64, bound: f64 },
    #[error("resistance matrix not positive definite (min eigenvalue {min_eig:.3e}): discretization too coarse")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("control basis size {requested} exceeds the available bump-center capacity ({available})")]
    BasisTooLarge { requested: usize, available: usize },
    #[error("control fit residual {residual:.3e} exceeds epsilon {epsilon:.3e} at pose h=({h0:.3}, {h1:.3}, {h2:.3}): a larger basis is needed")]
    FitResidual {
        residual: f64,
        epsilon: f64,
        h0: f64,
        h1: f64,
        h2: f64,
    },
    #[error("control matrix condition number {cond:.3e} exceeds bound {bound:.3e}: epsilon-bar too large")]
    IllConditionedControlMatrix { cond: f64, bound: f64 },
    #[error("pose h=({h0:.3}, {h1:.3}, {h2:.3}) outside the region covered by the control law")]
    OutsideCoveredRegion { h0: f64, h1: f64, h2: f64 },
    #[error("state velocity/acceleration outside the configured bound set: {0}")]
    OutsideBoundSet(String),
    #[error("probe point ({0:.3}, {1:.3}, {2:.3}) is not in the fluid region")]
    ProbeOutsideFluid(f64, f64, f64),
    #[error("trajectory invalid: {0}")]
    InvalidTrajectory(String),
    #[error("scenario validation failed: field `{field}`: {message}")]
    InvalidScenario { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
