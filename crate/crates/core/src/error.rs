use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite: eigenvalue {0}")]
    NotPositiveDefinite(f64),
    #[error("ellipticity violated at r = {r:e}: smallest eigenvalue {value}")]
    Ellipticity { r: f64, value: f64 },
    #[error("profile must vanish at the origin, limit is {0}")]
    NonzeroAtOrigin(f64),
    #[error("coefficient oscillation {value:e} exceeds modulus {bound:e} at r = {r:e}")]
    ModulusExceeded { r: f64, value: f64, bound: f64 },
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("field is not normalized (A(0) != I)")]
    NotNormalized,
    #[error("not a Gilbarg-Serrin field")]
    NotGilbargSerrin,
    #[error("generator has no closed-form integral")]
    MissingClosedForm,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("moment matrix A is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("difference is not integrable on the window: {0}")]
    NonIntegrable(String),
    #[error("infeasible construction: {0}")]
    Infeasible(String),
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("radius {r} is below the interpolation limit {min}")]
    RadiusTooSmall { r: f64, min: f64 },
    #[error("integration became stiff; solution truncated at r = {r:e}")]
    Stiff { r: f64 },
    #[error(transparent)]
    Parse(#[from] crate::profile::ParseError),
}

pub type Result<T> = std::result::Result<T, Error>;
