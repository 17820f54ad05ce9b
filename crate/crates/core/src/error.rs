use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polyline needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate polyline: total length {length:e} m")]
    DegeneratePolyline { length: f64 },

    #[error("invalid map element: {0}")]
    InvalidElement(String),

    #[error("point {index} ({x}, {y}) lies outside the perception range")]
    OutOfRange { index: usize, x: f64, y: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("curvature noise requires an open line element, got {0}")]
    NotALine(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("class `{0}` is not part of the evaluation class list")]
    UnknownClass(String),
}
