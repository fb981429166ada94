use thiserror::Error;

use crate::manifold::BarycenterResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient (sigma_min / sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("overlap matrix is numerically singular (sigma_min / sigma_max = {ratio:e})")]
    SingularOverlap { ratio: f64 },

    #[error("barycenter did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        last: Box<BarycenterResult>,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("snapshot rank too small for {requested} modes (lambda_q / lambda_1 = {ratio:e})")]
    RankTooSmall { requested: usize, ratio: f64 },

    #[error("interpolation nodes are not pairwise distinct")]
    DuplicateNodes,

    #[error("reduced mass matrix is not invertible")]
    SingularMass,

    #[error("solution diverged at step {step} (max |u| = {max_abs:e})")]
    DivergedSolution { step: usize, max_abs: f64 },

    #[error("reference field has zero norm")]
    ZeroReference,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
