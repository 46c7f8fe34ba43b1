use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation angle {angle:.6} is beyond the principal-log cutoff {cutoff:.6}")]
    Domain { angle: f64, cutoff: f64 },
    #[error("matrix is numerically singular (smallest singular value {sigma_min:e})")]
    Singular { sigma_min: f64 },
    #[error("matrix is not a rotation (orthogonality error {orth:e}, determinant error {det:e})")]
    NotRotation { orth: f64, det: f64 },
    #[error("initial law is supported on a line; non-degenerate bounds do not apply")]
    Degenerate,
    #[error("rotation path has no steps")]
    EmptyPath,
    #[error("conditional covariance too ill-conditioned (condition number {condition:e})")]
    DegenerateConditioning { condition: f64 },
    #[error("insufficient Monte Carlo precision: relative standard error {rel_se:.3} at {location}")]
    InsufficientPrecision { rel_se: f64, location: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
