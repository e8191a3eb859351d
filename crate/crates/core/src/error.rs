use thiserror::Error;

/// Errors raised by scenario validation, channel evaluation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("position {what} = ({x}, {y}, {z}) lies outside the room")]
    OutOfRoom { what: String, x: f64, y: f64, z: f64 },

    #[error("constant `{0}` must be strictly positive and finite")]
    NonPositiveConstant(&'static str),

    #[error("point ({x}, {y}, {z}) is not on any candidate wall plane")]
    NotOnAnyPlane { x: f64, y: f64, z: f64 },

    #[error("plane coordinates ({u}, {v}) are outside the open range of the wall")]
    OutOfPlaneRange { u: f64, v: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("semi-angle at half power must lie strictly between 0 and 90 degrees, got {0}")]
    DegenerateSemiAngle(f64),

    #[error("noise power must be strictly positive")]
    NonPositiveNoise,

    #[error("total consumed power is zero")]
    ZeroTotalPower,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("enumeration of {size} combinations exceeds the guard of {limit}")]
    TooLarge { size: u128, limit: u128 },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
