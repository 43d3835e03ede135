use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate faces {faces:?}")]
    DegenerateFaces { faces: Vec<usize> },

    #[error("non-manifold edges shared by more than two faces; offending faces {faces:?}")]
    NonManifold { faces: Vec<usize> },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point is off the plane of face {face} (distance {distance:e})")]
    OffPlane { face: usize, distance: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        last_good: Box<crate::field::MlpParams>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
