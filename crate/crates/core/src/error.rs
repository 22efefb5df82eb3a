use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested point has no attracting branch / lies at or past the bifurcation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("memory estimate of {required} bytes exceeds the cap of {cap} bytes: {hint}")]
    Sizing { required: u64, cap: u64, hint: String },

    #[error("quadrature did not converge (estimated error {estimate:.3e}, target {target:.3e})")]
    Quadrature { estimate: f64, target: f64 },

    #[error("step {step:e} is too large for a stable explicit solve; use at most {required:e}")]
    Stiffness { step: f64, required: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("data error: {0}")]
    Data(String),

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
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
