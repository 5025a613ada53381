//! Independent check path: derivatives of Π_p, multistart Newton on the
//! primal problem and a quadrature version of the primal energy.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buckling::geometric_stiffness;
use crate::energy::{primal_gradient, primal_hessian, total_potential};
use crate::fem::{shape_functions, AssembledSystem};
use crate::linalg::{gen_eig_sym_min_vec, inertia, solve_sym, SymMatrix};
use crate::model::{Lateral, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalKind {
    Min,
    Max,
    Saddle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub w: DVector<f64>,
    pub pi_p: f64,
    pub hess_inertia: (usize, usize, usize),
    pub kind: CriticalKind,
}

/// (∇Π_p, ∇²Π_p) at w.
pub fn primal_derivatives(w: &DVector<f64>, sys: &AssembledSystem) -> (DVector<f64>, SymMatrix) {
    (primal_gradient(w, sys), primal_hessian(w, sys))
}

/// First buckling mode scaled to the amplitude where the quartic Π_p(a·v)
/// (with f dropped) is stationary. Below the critical load the quadratic
/// coefficient is positive and the mode is returned at unit norm.
pub fn buckling_seed(sys: &AssembledSystem) -> DVector<f64> {
    let kg = geometric_stiffness(sys);
    let v = match gen_eig_sym_min_vec(&sys.g0, &kg) {
        Ok((_, v)) => v,
        Err(_) => return DVector::zeros(sys.n_red),
    };
    let v = &v / v.norm();
    let b = sys.a_vec(&v);
    let q2 = 0.5 * sys.g0.quad(&v) - b.dot(&sys.k_inv.mul_vec(&sys.lam_vec));
    let q4 = 0.5 * sys.k_inv.quad(&b);
    if q2 < 0.0 && q4 > 0.0 {
        v * (-q2 / (2.0 * q4)).sqrt()
    } else {
        v
    }
}

/// Seeds in the fixed order: pure bending, its negation, zero, ±buckling mode.
/// Further seeds mix the bending solution with growing multiples of the mode.
fn seeds(sys: &AssembledSystem, n_starts: usize) -> Vec<DVector<f64>> {
    let bend = solve_sym(&sys.g0, &sys.f_vec).unwrap_or_else(|_| DVector::zeros(sys.n_red));
    let mode = buckling_seed(sys);
    let mut out = vec![bend.clone(), -&bend, DVector::zeros(sys.n_red), mode.clone(), -&mode];
    let mut j = 0;
    while out.len() < n_starts {
        let amp = 0.5 * (1 + j / 2) as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out.push(&bend + &mode * (sign * amp));
        j += 1;
    }
    out.truncate(n_starts);
    out
}

/// Newton on ∇Π_p = 0 with backtracking on ‖∇Π_p‖²; Levenberg-regularized
/// Gauss–Newton direction when the Hessian is singular.
pub fn newton(w0: &DVector<f64>, sys: &AssembledSystem, max_iter: usize) -> Option<DVector<f64>> {
    let target = 1e-12 * (1.0 + sys.f_vec.norm());
    let accept = 1e-9 * (1.0 + sys.f_vec.norm());
    let mut w = w0.clone();
    let (mut g, mut h) = primal_derivatives(&w, sys);
    for _ in 0..max_iter {
        let gn = g.norm();
        if gn <= target {
            return Some(w);
        }
        let d = match solve_sym(&h, &(-&g)) {
            Ok(d) => d,
            Err(_) => {
                let hm = h.as_matrix();
                let nu = 1e-8 * (1.0 + h.max_abs()).powi(2);
                let h2 = SymMatrix::from_dmatrix(hm * hm).ok()?.shifted(nu);
                solve_sym(&h2, &(-(hm * &g))).ok()?
            }
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-10 {
            let wn = &w + &d * t;
            let gnew = primal_gradient(&wn, sys);
            if gnew.norm_squared() <= (1.0 - 1e-4 * t) * gn * gn {
                w = wn;
                g = gnew;
                h = primal_hessian(&w, sys);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (g.norm() <= accept).then_some(w)
}

fn classify_point(w: DVector<f64>, sys: &AssembledSystem, tol: f64) -> CriticalPoint {
    let hess_inertia = inertia(&primal_hessian(&w, sys), tol);
    let kind = match hess_inertia {
        (_, 0, 0) => CriticalKind::Min,
        (0, _, 0) => CriticalKind::Max,
        _ => CriticalKind::Saddle,
    };
    CriticalPoint {
        pi_p: total_potential(&w, sys),
        hess_inertia,
        kind,
        w,
    }
}

/// Distinct critical points of Π_p reached from `n_starts` seeds, in seed order.
pub fn multistart_newton(sys: &AssembledSystem, settings: &SolverSettings, n_starts: usize) -> Vec<CriticalPoint> {
    let found: Vec<Option<DVector<f64>>> = seeds(sys, n_starts.max(1))
        .par_iter()
        .map(|w0| newton(w0, sys, 200))
        .collect();
    let mut out: Vec<CriticalPoint> = Vec::new();
    for w in found.into_iter().flatten() {
        let dup = out
            .iter()
            .any(|p| (&p.w - &w).norm() <= 1e-6 * (1.0 + w.norm()));
        if !dup {
            out.push(classify_point(w, sys, settings.classify_tol));
        }
    }
    out
}

/// Primal energy by 5-point Gauss quadrature of the continuum density
/// ½EIw″² + Eαw′⁴/12 − ½Eλw′² − qw with interpolated w, which differs from
/// the mixed form only through the linear interpolation of σ.
pub fn quadrature_potential(w: &DVector<f64>, sys: &AssembledSystem) -> f64 {
    const GAUSS5: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let wf = sys.inject(w);
    let p = &sys.props;
    let lam = sys.load.axial_lambda;
    let q = match sys.load.lateral {
        Lateral::Uniform(q) => q,
        Lateral::CenterPoint(_) => 0.0,
    };
    let mut total = 0.0;
    for e in 0..sys.mesh.m {
        let le = sys.mesh.node_x[e + 1] - sys.mesh.node_x[e];
        let d = |k: usize| wf[2 * e + k];
        for (xi, wt) in GAUSS5 {
            let sh = shape_functions(xi, le);
            let wv: f64 = (0..4).map(|k| sh.nw[k] * d(k)).sum();
            let w1: f64 = (0..4).map(|k| sh.dnw[k] * d(k)).sum();
            let w2: f64 = (0..4).map(|k| sh.d2nw[k] * d(k)).sum();
            let dens = 0.5 * p.ei() * w2 * w2 + p.e * p.alpha * w1.powi(4) / 12.0
                - 0.5 * p.e * lam * w1 * w1
                - q * wv;
            total += wt * le / 2.0 * dens;
        }
    }
    if let Lateral::CenterPoint(pf) = sys.load.lateral {
        total -= pf * wf[sys.mesh.m];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::model::*;

    fn system(m: usize, lam: f64) -> AssembledSystem {
        let props = derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap();
        let load = LoadCase::new(Lateral::Uniform(0.1), lam).unwrap();
        assemble(&props, &load, &SupportSpec::SimplySupported, &Mesh::uniform(1.0, m).unwrap()).unwrap()
    }

    #[test]
    fn gradient_at_zero_is_minus_f() {
        let s = system(6, 0.01);
        let (g, _) = primal_derivatives(&DVector::zeros(s.n_red), &s);
        assert!((g + &s.f_vec).amax() <= 1e-15);
    }

    #[test]
    fn seed_order_and_count() {
        let s = system(6, 0.01);
        let sd = seeds(&s, 7);
        assert_eq!(sd.len(), 7);
        assert!((&sd[0] + &sd[1]).amax() == 0.0);
        assert_eq!(sd[2].amax(), 0.0);
        assert!((&sd[3] + &sd[4]).amax() == 0.0);
    }

    #[test]
    fn below_critical_single_minimum() {
        let s = system(6, 0.0001);
        let st = SolverSettings::for_scale(s.g0_max());
        let pts = multistart_newton(&s, &st, 5);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].kind, CriticalKind::Min);
    }

    #[test]
    fn points_are_stationary() {
        let s = system(6, 0.01);
        let st = SolverSettings::for_scale(s.g0_max());
        for p in multistart_newton(&s, &st, 5) {
            assert!(primal_gradient(&p.w, &s).norm() <= 1e-9 * (1.0 + s.f_vec.norm()));
        }
    }

    #[test]
    fn quadrature_agrees_at_zero_axial_strain() {
        // With w′ = 0 at every Gauss point only bending and load terms remain,
        // and the mixed form carries the same constant: both vanish at w = 0.
        let s = system(4, 0.01);
        let z = DVector::zeros(s.n_red);
        assert!((quadrature_potential(&z, &s) - total_potential(&z, &s)).abs() <= 1e-14);
    }
}
