//! Discrete energies, canonical relations, residuals and axial recovery.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fem::{shape_functions, AssembledSystem};
use crate::linalg::{solve_sym, SymMatrix};
use crate::model::BeamProperties;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub pi_p: f64,
    pub xi: f64,
    /// None when G(σ) is singular.
    pub pi_d: Option<f64>,
    pub gap_quadratic: f64,
    pub duality_gap: Option<f64>,
    pub res_equilibrium: f64,
    pub res_constitutive: f64,
}

/// σ = (2Eα/3)ε − Eλ
pub fn canonical_stress(eps: f64, props: &BeamProperties, lambda: f64) -> f64 {
    2.0 * props.e * props.alpha / 3.0 * eps - props.e * lambda
}

/// σ̂(w) = K⁻¹(a(w) − λ)
pub fn stationary_stress(w: &DVector<f64>, sys: &AssembledSystem) -> DVector<f64> {
    sys.k_inv.mul_vec(&(sys.a_vec(w) - &sys.lam_vec))
}

pub fn total_complementary(w: &DVector<f64>, sigma: &DVector<f64>, sys: &AssembledSystem) -> f64 {
    0.5 * sys.g(sigma).quad(w) - 0.5 * sys.k.quad(sigma) - sys.lam_vec.dot(sigma) - sys.f_vec.dot(w)
        - sys.c
}

/// Π_p(w) = Ξ(w, σ̂(w)), the maximum of Ξ(w, ·).
pub fn total_potential(w: &DVector<f64>, sys: &AssembledSystem) -> f64 {
    total_complementary(w, &stationary_stress(w, sys), sys)
}

fn solve_gap(g: &SymMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    solve_sym(g, rhs).map_err(|e| match e {
        Error::Singular { .. } => Error::SingularGap,
        other => other,
    })
}

/// w(σ) = G(σ)⁻¹f
pub fn primal_from_dual(sigma: &DVector<f64>, sys: &AssembledSystem) -> Result<DVector<f64>> {
    solve_gap(&sys.g(sigma), &sys.f_vec)
}

pub fn pure_complementary(sigma: &DVector<f64>, sys: &AssembledSystem) -> Result<f64> {
    let w = primal_from_dual(sigma, sys)?;
    Ok(-0.5 * sys.f_vec.dot(&w) - 0.5 * sys.k.quad(sigma) - sys.lam_vec.dot(sigma) - sys.c)
}

/// −½fᵀG⁻¹f − ½wᵀM(σ)w − ½λᵀσ − c
pub fn reformulated_complementary(sigma: &DVector<f64>, w: &DVector<f64>, sys: &AssembledSystem) -> Result<f64> {
    let wg = primal_from_dual(sigma, sys)?;
    Ok(-0.5 * sys.f_vec.dot(&wg) - 0.5 * sys.m_matrix(sigma).quad(w) - 0.5 * sys.lam_vec.dot(sigma)
        - sys.c)
}

pub fn res_equilibrium(w: &DVector<f64>, sigma: &DVector<f64>, sys: &AssembledSystem) -> f64 {
    (sys.g(sigma).mul_vec(w) - &sys.f_vec).norm()
}

pub fn res_constitutive(w: &DVector<f64>, sigma: &DVector<f64>, sys: &AssembledSystem) -> f64 {
    (sys.a_vec(w) - sys.k.mul_vec(sigma) - &sys.lam_vec).norm()
}

pub fn gap_and_residuals(w: &DVector<f64>, sigma: &DVector<f64>, sys: &AssembledSystem) -> EnergyReport {
    let g = sys.g(sigma);
    let pi_p = total_potential(w, sys);
    let pi_d = pure_complementary(sigma, sys).ok();
    EnergyReport {
        pi_p,
        xi: total_complementary(w, sigma, sys),
        pi_d,
        gap_quadratic: 0.5 * g.quad(w),
        duality_gap: pi_d.map(|d| pi_p - d),
        res_equilibrium: (g.mul_vec(w) - &sys.f_vec).norm(),
        res_constitutive: res_constitutive(w, sigma, sys),
    }
}

/// ∇Π_p(w) = G(σ̂(w))w − f
pub fn primal_gradient(w: &DVector<f64>, sys: &AssembledSystem) -> DVector<f64> {
    sys.g(&stationary_stress(w, sys)).mul_vec(w) - &sys.f_vec
}

/// ∇²Π_p(w) = G(σ̂(w)) + B K⁻¹ Bᵀ, B with columns Hᵢw.
pub fn primal_hessian(w: &DVector<f64>, sys: &AssembledSystem) -> SymMatrix {
    let g = sys.g(&stationary_stress(w, sys));
    let b = sys.b_matrix(w);
    let bkb = &b * sys.k_inv.as_matrix() * b.transpose();
    SymMatrix::from_dmatrix(g.into_matrix() + bkb).expect("finite Hessian")
}

/// ∇²Π_d(σ) = −K − BᵀG(σ)⁻¹B with B built from w = G(σ)⁻¹f.
pub fn dual_hessian(sigma: &DVector<f64>, sys: &AssembledSystem) -> Result<SymMatrix> {
    let g = sys.g(sigma);
    let w = solve_gap(&g, &sys.f_vec)?;
    let b = sys.b_matrix(&w);
    let ldl = crate::linalg::ldl_factor(&g);
    let mut gib = DMatrix::zeros(b.nrows(), b.ncols());
    for j in 0..b.ncols() {
        let col = ldl.solve(&b.column(j).clone_owned()).map_err(|_| Error::SingularGap)?;
        gib.set_column(j, &col);
    }
    let h = -(sys.k.as_matrix() + b.transpose() * gib);
    SymMatrix::from_dmatrix(h)
}

/// Nodal axial displacement with u(0)=0:
/// u′ = −[½(1+μ)w′² + λ/(2h(1+μ))], integrated per element with 3-point Gauss.
pub fn recover_axial(w_red: &DVector<f64>, sys: &AssembledSystem) -> Vec<f64> {
    let wf = sys.inject(w_red);
    let p = &sys.props;
    let lambda = sys.load.axial_lambda;
    let gauss = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    let mut u = Vec::with_capacity(sys.mesh.m + 1);
    u.push(0.0);
    let mut acc = 0.0;
    for e in 0..sys.mesh.m {
        let le = sys.mesh.node_x[e + 1] - sys.mesh.node_x[e];
        let we = [wf[2 * e], wf[2 * e + 1], wf[2 * e + 2], wf[2 * e + 3]];
        let mut integral = 0.0;
        for (xi, wt) in gauss {
            let s = shape_functions(xi, le);
            let slope: f64 = (0..4).map(|k| s.dnw[k] * we[k]).sum();
            integral += wt * le / 2.0
                * (0.5 * (1.0 + p.mu) * slope * slope + lambda / (2.0 * p.h * (1.0 + p.mu)));
        }
        acc -= integral;
        u.push(acc);
    }
    u
}

/// Nodal deflections and rotations in full numbering (zeros at fixed DOFs).
pub fn nodal_fields(w_red: &DVector<f64>, sys: &AssembledSystem) -> (Vec<f64>, Vec<f64>) {
    let wf = sys.inject(w_red);
    let n = sys.mesh.m + 1;
    ((0..n).map(|k| wf[2 * k]).collect(), (0..n).map(|k| wf[2 * k + 1]).collect())
}
