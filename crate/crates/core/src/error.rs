use thiserror::Error;

/// Errors raised by the spline, mesh, assembly and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0:?} lies outside the unit domain")]
    Domain(Vec<f64>),

    #[error("invalid knot vector: {0}")]
    Knots(String),

    #[error("knot vectors are not nested: {0}")]
    NotNested(String),

    #[error("element {index} of level {level} is not active")]
    InactiveElement { level: usize, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular local system: {0}")]
    Singular(String),

    #[error("non-positive Jacobian on element {index} of level {level} (det = {det:e})")]
    Geometry { level: usize, index: usize, det: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
