//! Finite-difference audits of the primal and dual derivatives.

use cdbeam_core::energy::*;
use cdbeam_core::fem::{assemble, AssembledSystem};
use cdbeam_core::model::*;
use cdbeam_core::oracle::{primal_derivatives, quadrature_potential};
use cdbeam_core::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(m: usize, lam: f64) -> AssembledSystem {
    let props = derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap();
    let load = LoadCase::new(Lateral::Uniform(0.1), lam).unwrap();
    assemble(&props, &load, &SupportSpec::SimplySupported, &Mesh::uniform(1.0, m).unwrap()).unwrap()
}

#[test]
fn primal_derivatives_match_differences() {
    let s = system(6, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let w = DVector::from_fn(s.n_red, |_, _| rng.gen_range(-0.5..0.5));
        let (g, h) = primal_derivatives(&w, &s);
        let mut gfd = DVector::zeros(s.n_red);
        let mut hfd = DMatrix::zeros(s.n_red, s.n_red);
        for i in 0..s.n_red {
            let step = 1e-5 * (1.0 + w[i].abs());
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += step;
            wm[i] -= step;
            gfd[i] = (total_potential(&wp, &s) - total_potential(&wm, &s)) / (2.0 * step);
            hfd.set_column(i, &((primal_gradient(&wp, &s) - primal_gradient(&wm, &s)) / (2.0 * step)));
        }
        assert!((&gfd - &g).norm() <= 1e-6 * g.norm());
        assert!((&hfd - h.as_matrix()).norm() <= 1e-5 * h.as_matrix().norm());
    }
}

#[test]
fn dual_hessian_matches_differences() {
    // ∇Π_d(σ) = a(G(σ)⁻¹f) − Kσ − λ, differentiated numerically.
    let s = system(6, 0.002);
    let grad = |sig: &DVector<f64>| {
        let w = primal_from_dual(sig, &s).unwrap();
        s.a_vec(&w) - s.k.mul_vec(sig) - &s.lam_vec
    };
    let sig = DVector::from_fn(s.n_sigma(), |i, _| -1.0 + 0.3 * (i as f64).sin());
    let h = dual_hessian(&sig, &s).unwrap();
    let mut hfd = DMatrix::zeros(s.n_sigma(), s.n_sigma());
    for i in 0..s.n_sigma() {
        let step = 1e-4;
        let (mut sp, mut sm) = (sig.clone(), sig.clone());
        sp[i] += step;
        sm[i] -= step;
        hfd.set_column(i, &((grad(&sp) - grad(&sm)) / (2.0 * step)));
    }
    assert!((&hfd - h.as_matrix()).norm() <= 1e-6 * h.as_matrix().norm());
    // Pure complementary gradient by differences.
    for i in 0..s.n_sigma() {
        let step = 1e-4;
        let (mut sp, mut sm) = (sig.clone(), sig.clone());
        sp[i] += step;
        sm[i] -= step;
        let d = (pure_complementary(&sp, &s).unwrap() - pure_complementary(&sm, &s).unwrap()) / (2.0 * step);
        assert!((d - grad(&sig)[i]).abs() <= 1e-7 * (1.0 + d.abs()));
    }
}

#[test]
fn quadrature_potential_converges_to_mixed_form() {
    let mut prev = f64::INFINITY;
    for m in [10, 20, 40] {
        let s = system(m, 0.01);
        let w = solve_sym_bend(&s) * 3.0;
        let (a, b) = (total_potential(&w, &s), quadrature_potential(&w, &s));
        let rel = (a - b).abs() / a.abs();
        assert!(rel < prev);
        if m == 40 {
            assert!(rel <= 1e-3, "{rel}");
        }
        prev = rel;
    }
}

fn solve_sym_bend(s: &AssembledSystem) -> DVector<f64> {
    cdbeam_core::linalg::solve_sym(&s.g0, &s.f_vec).unwrap()
}
