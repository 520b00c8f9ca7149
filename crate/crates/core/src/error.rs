use thiserror::Error;

/// Errors raised by variety construction, sampling, kernels and experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid variety: {0}")]
    InvalidVariety(String),
    #[error("unknown catalog variety `{0}`")]
    UnknownVariety(String),
    #[error("variety is outside the supported degree range: {0}")]
    UnsupportedDegree(String),
    #[error("degenerate exponent: d - nu = {excess} >= 2n = {two_n}")]
    DegenerateExponent { excess: i64, two_n: usize },
    #[error("fiber polynomial is degenerate for projection {proj:?}")]
    FiberDegenerate { proj: Vec<usize> },
    #[error("point is too close to the singular locus (minors norm {norm:e} <= {tol:e})")]
    NearSingular { norm: f64, tol: f64 },
    #[error("pole: {0}")]
    Pole(String),
    #[error("generator universe mismatch ({0} vs {1})")]
    UniverseMismatch(usize, usize),
    #[error("form has e-degree {found}, expected {expected}")]
    WrongDegree { expected: usize, found: usize },
    #[error("antiholomorphic degree {found} exceeds the dimension {dim}")]
    DegreeOverflow { found: usize, dim: usize },
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("profile is not monotone on (0, r_max]")]
    NonRadialProfile,
    #[error("exponent out of range: {0}")]
    ExponentRange(String),
    #[error("fit needs at least {needed} points over {decades} decades, got {points} points over {got:.2}")]
    InsufficientDecades { needed: usize, decades: f64, points: usize, got: f64 },
    #[error("calibration failed: residual {residual:e} exceeds {bound:e}")]
    CalibrationFailure { residual: f64, bound: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
