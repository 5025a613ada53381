//! Canonical dual finite elements for the Gao beam and a primal-dual SDP
//! iteration that recovers its global minimum, local maximum and local
//! minimum post-buckling states.

pub mod buckling;
pub mod energy;
pub mod fem;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod sdp;
pub mod solver;

pub use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("matrix is singular (pivot {pivot:e} below {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("G(sigma) is singular, sigma is outside the admissible dual set")]
    SingularGap,
    #[error("SDP solve failed: {0}")]
    Sdp(String),
    #[error("branch SDP is infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
