//! Euler critical load of the discretized beam.

use serde::{Deserialize, Serialize};

use crate::fem::{assemble, AssembledSystem};
use crate::linalg::{gen_eig_sym_min, SymMatrix};
use crate::model::{BeamProperties, Lateral, LoadCase, Mesh, SupportSpec};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLoad {
    /// Smallest Λ of K_bend v = Λ K_geo v.
    pub rayleigh: f64,
    /// rayleigh·(1+μ)(1−μ²), the λ-to-force conversion factor.
    pub scaled: f64,
}

/// E·Σᵢ Hᵢ, the geometric stiffness for a uniform unit strain field.
pub fn geometric_stiffness(sys: &AssembledSystem) -> SymMatrix {
    let mut k = SymMatrix::zeros(sys.n_red);
    for h in &sys.hsens {
        k.axpy(sys.props.e, h);
    }
    k
}

pub fn critical_load_of(sys: &AssembledSystem) -> Result<CriticalLoad> {
    let rayleigh = gen_eig_sym_min(&sys.g0, &geometric_stiffness(sys))?;
    let mu = sys.props.mu;
    Ok(CriticalLoad {
        rayleigh,
        scaled: (1.0 + mu) * (1.0 - mu * mu) * rayleigh,
    })
}

pub fn critical_load(props: &BeamProperties, support: &SupportSpec, mesh: &Mesh) -> Result<CriticalLoad> {
    let load = LoadCase::new(Lateral::Uniform(0.0), 0.0)?;
    critical_load_of(&assemble(props, &load, support, mesh)?)
}
