use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("empty bubble space: sub-mesh resolution m = {m} has no interior node (need m >= 3)")]
    EmptyBubbleSpace { m: usize },

    #[error("meshes are not nested: {0}")]
    NonNested(String),

    #[error("coefficient {value:e} is not positive at quadrature point ({x}, {y})")]
    NonPositiveCoefficient { x: f64, y: f64, value: f64 },

    #[error("coefficient {value:e} at ({x}, {y}) lies outside its declared bounds [{lower:e}, {upper:e}]")]
    CoefficientOutOfBounds {
        x: f64,
        y: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("nonlinearity value b({t}) = {value:e} is below its lower bound {b0:e}")]
    NonlinearityBelowBound { t: f64, value: f64, b0: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("local problem on element {element} failed: {source}")]
    LocalSolve {
        element: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("inverse Kirchhoff transform failed for s = {0}")]
    Inversion(f64),

    #[error("coefficient snapshot mismatch: lifts built from {lifts}, system built from {system}")]
    SnapshotMismatch { lifts: u64, system: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
