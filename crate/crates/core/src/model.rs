//! Beam, load, support, mesh and solver settings.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Material and section constants. `h` is the half-height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProperties {
    pub e: f64,
    pub mu: f64,
    pub l: f64,
    pub h: f64,
    pub i: f64,
    pub alpha: f64,
}

impl BeamProperties {
    pub fn ei(&self) -> f64 {
        self.e * self.i
    }
}

pub fn derive_constants(e: f64, mu: f64, l: f64, h: f64) -> Result<BeamProperties> {
    if !(e > 0.0) || !(l > 0.0) || !(h > 0.0) {
        return Err(Error::Domain(format!(
            "E, L and h must be positive (E={e}, L={l}, h={h})"
        )));
    }
    if !(0.0..0.5).contains(&mu) {
        return Err(Error::Domain(format!("Poisson ratio {mu} outside [0, 0.5)")));
    }
    Ok(BeamProperties {
        e,
        mu,
        l,
        h,
        i: 2.0 * h * h * h / 3.0,
        alpha: 3.0 * h * (1.0 - mu * mu),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lateral {
    /// Force per unit length.
    Uniform(f64),
    /// Force on the center node; needs an even element count.
    CenterPoint(f64),
}

impl Lateral {
    pub fn magnitude(&self) -> f64 {
        match *self {
            Lateral::Uniform(f) | Lateral::CenterPoint(f) => f,
        }
    }

    pub fn scaled(&self, factor: f64) -> Lateral {
        match *self {
            Lateral::Uniform(f) => Lateral::Uniform(f * factor),
            Lateral::CenterPoint(f) => Lateral::CenterPoint(f * factor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub lateral: Lateral,
    pub axial_lambda: f64,
}

impl LoadCase {
    pub fn new(lateral: Lateral, axial_lambda: f64) -> Result<Self> {
        if !(axial_lambda >= 0.0) || !axial_lambda.is_finite() {
            return Err(Error::Domain(format!(
                "axial load parameter must be >= 0, got {axial_lambda}"
            )));
        }
        if !lateral.magnitude().is_finite() {
            return Err(Error::Domain("lateral load is not finite".into()));
        }
        Ok(LoadCase {
            lateral,
            axial_lambda,
        })
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if matches!(self.lateral, Lateral::CenterPoint(_)) && mesh.m % 2 != 0 {
            return Err(Error::Domain(format!(
                "a center point load needs an even element count so it sits on a node (m={})",
                mesh.m
            )));
        }
        Ok(())
    }
}

/// Essential boundary conditions. Full DOF numbering is `2k` for the
/// deflection and `2k+1` for the rotation of node `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportSpec {
    SimplySupported,
    Clamped,
    Custom(Vec<usize>),
}

impl SupportSpec {
    /// Sorted, deduplicated fixed DOFs in full numbering.
    pub fn fixed_dofs(&self, m: usize) -> Vec<usize> {
        let mut v = match self {
            SupportSpec::SimplySupported => vec![0, 2 * m],
            SupportSpec::Clamped => vec![0, 1, 2 * m, 2 * m + 1],
            SupportSpec::Custom(list) => list.clone(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, SupportSpec::Custom(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub m: usize,
    pub le: f64,
    pub node_x: Vec<f64>,
}

impl Mesh {
    pub fn uniform(l: f64, m: usize) -> Result<Mesh> {
        if m < 2 {
            return Err(Error::Domain(format!("need at least 2 elements, got {m}")));
        }
        if !(l > 0.0) {
            return Err(Error::Domain(format!("beam length must be positive, got {l}")));
        }
        let le = l / m as f64;
        let node_x = (0..=m).map(|k| k as f64 * le).collect();
        Ok(Mesh { m, le, node_x })
    }

    pub fn n_nodes(&self) -> usize {
        self.m + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
    pub strictness_eps: f64,
    pub classify_tol: f64,
}

impl SolverSettings {
    /// Defaults scaled by the largest bending-stiffness entry.
    pub fn for_scale(g0_max: f64) -> Self {
        SolverSettings {
            outer_tol: 1e-8,
            outer_max_iter: 100,
            sdp_tol: 1e-10,
            sdp_max_iter: 200,
            strictness_eps: 1e-8 * (1.0 + g0_max),
            classify_tol: 1e-9 * (1.0 + g0_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tols = [
            ("outer_tol", self.outer_tol),
            ("sdp_tol", self.sdp_tol),
            ("strictness_eps", self.strictness_eps),
            ("classify_tol", self.classify_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.outer_max_iter == 0 || self.sdp_max_iter == 0 {
            return Err(Error::Domain("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings::for_scale(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_hand_values() {
        let p = derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap();
        assert!((p.i - 8.333333333333333e-5).abs() < 1e-18);
        assert!((p.alpha - 0.1365).abs() < 1e-15);
        let p = derive_constants(1000.0, 0.3, 1.0, 0.1).unwrap();
        assert!((p.i - 6.666666666666667e-4).abs() < 1e-17);
        let p = derive_constants(7.0, 0.0, 2.0, 0.3).unwrap();
        assert_eq!(p.alpha, 3.0 * 0.3);
    }

    #[test]
    fn bad_constants_rejected() {
        assert!(derive_constants(0.0, 0.3, 1.0, 0.05).is_err());
        assert!(derive_constants(1.0, 0.5, 1.0, 0.05).is_err());
        assert!(derive_constants(1.0, -0.1, 1.0, 0.05).is_err());
        assert!(derive_constants(1.0, 0.3, 1.0, -1.0).is_err());
        assert!(derive_constants(1.0, 0.3, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn fixed_dof_sets() {
        assert_eq!(SupportSpec::SimplySupported.fixed_dofs(4), vec![0, 8]);
        assert_eq!(SupportSpec::Clamped.fixed_dofs(4), vec![0, 1, 8, 9]);
        assert_eq!(SupportSpec::Custom(vec![3, 0, 3]).fixed_dofs(4), vec![0, 3]);
    }

    #[test]
    fn point_load_needs_even_mesh() {
        let lc = LoadCase::new(Lateral::CenterPoint(0.1), 0.01).unwrap();
        assert!(lc.check_mesh(&Mesh::uniform(1.0, 5).unwrap()).is_err());
        assert!(lc.check_mesh(&Mesh::uniform(1.0, 6).unwrap()).is_ok());
        assert!(LoadCase::new(Lateral::Uniform(0.1), -1e-3).is_err());
    }

    #[test]
    fn uniform_mesh_spacing() {
        let mesh = Mesh::uniform(2.0, 8).unwrap();
        assert_eq!(mesh.node_x.len(), 9);
        for w in mesh.node_x.windows(2) {
            assert!((w[1] - w[0] - mesh.le).abs() < 1e-15);
        }
        assert!(Mesh::uniform(1.0, 1).is_err());
    }
}
