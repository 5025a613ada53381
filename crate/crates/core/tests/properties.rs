use cdbeam_core::energy::*;
use cdbeam_core::fem::{assemble, AssembledSystem};
use cdbeam_core::linalg::{eig_sym, ldl_factor, solve_sym, SymMatrix};
use cdbeam_core::model::*;
use cdbeam_core::sdp::LmiBlock;
use cdbeam_core::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(m: usize, lam: f64, support: SupportSpec) -> AssembledSystem {
    let props = derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap();
    let load = LoadCase::new(Lateral::Uniform(0.1), lam).unwrap();
    assemble(&props, &load, &support, &Mesh::uniform(1.0, m).unwrap()).unwrap()
}

fn rand_vec(seed: u64, n: usize, scale: f64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn potential_is_max_of_complementary(seed in any::<u64>(), lam in 0.0..0.02f64) {
        let s = system(6, lam, SupportSpec::SimplySupported);
        let w = rand_vec(seed, s.n_red, 0.5);
        let sig = rand_vec(seed ^ 1, s.n_sigma(), 30.0);
        let pi = total_potential(&w, &s);
        prop_assert!(total_complementary(&w, &sig, &s) <= pi + 1e-12 * (1.0 + pi.abs()));
        prop_assert!(res_constitutive(&w, &stationary_stress(&w, &s), &s) <= 1e-13);
    }

    #[test]
    fn weak_duality_for_tensile_stress(seed in any::<u64>(), lam in 0.0..0.02f64) {
        // σ ≥ 0 makes the geometric part positive semidefinite, so G(σ) ≻ 0.
        let s = system(6, lam, SupportSpec::Clamped);
        let sig = rand_vec(seed, s.n_sigma(), 10.0).map(f64::abs);
        let w = rand_vec(seed ^ 7, s.n_red, 0.5);
        let d = pure_complementary(&sig, &s).unwrap();
        let p = total_potential(&w, &s);
        prop_assert!(d <= p + 1e-12 * (1.0 + p.abs()));
        let wd = primal_from_dual(&sig, &s).unwrap();
        prop_assert!(d <= total_potential(&wd, &s) + 1e-12);
    }

    #[test]
    fn a_is_quadratic_in_w(seed in any::<u64>(), t in -3.0..3.0f64) {
        let s = system(5, 0.01, SupportSpec::SimplySupported);
        let w = rand_vec(seed, s.n_red, 1.0);
        let lhs = s.a_vec(&(&w * t));
        let rhs = s.a_vec(&w) * (t * t);
        prop_assert!((lhs - &rhs).amax() <= 1e-13 * (1.0 + rhs.amax()));
    }

    #[test]
    fn g_is_affine_in_sigma(seed in any::<u64>(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let s = system(5, 0.01, SupportSpec::Clamped);
        let s1 = rand_vec(seed, s.n_sigma(), 20.0);
        let s2 = rand_vec(seed ^ 3, s.n_sigma(), 20.0);
        let g0 = s.g0.as_matrix();
        let lhs = s.g(&(&s1 * a + &s2 * b)).as_matrix() - g0;
        let rhs = (s.g(&s1).as_matrix() - g0) * a + (s.g(&s2).as_matrix() - g0) * b;
        prop_assert!((lhs - rhs).amax() <= 1e-10 * s.g0_max());
    }

    #[test]
    fn ldl_inertia_agrees_with_jacobi(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Spectrum kept away from zero so both counts are unambiguous.
        let d: Vec<f64> = (0..n).map(|_| {
            let v: f64 = rng.gen_range(0.1..5.0);
            if rng.gen_bool(0.5) { v } else { -v }
        }).collect();
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let a = SymMatrix::from_dmatrix(&q * DMatrix::from_diagonal(&DVector::from_vec(d.clone())) * q.transpose()).unwrap();
        let (pos, neg, zero) = ldl_factor(&a).inertia();
        let want_neg = d.iter().filter(|v| **v < 0.0).count();
        prop_assert_eq!((pos, neg, zero), (n - want_neg, want_neg, 0));
        let (vals, _) = eig_sym(&a).unwrap();
        prop_assert_eq!(vals.iter().filter(|v| **v < 0.0).count(), want_neg);
        let b = DVector::from_fn(n, |i, _| (i as f64).cos());
        let x = solve_sym(&a, &b).unwrap();
        prop_assert!((a.mul_vec(&x) - b).amax() <= 1e-10 * (1.0 + x.amax()));
    }

    #[test]
    fn lmi_block_is_affine(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dim, p) = (4, 3);
        let mut blk = LmiBlock::new(dim, p);
        for j in 0..dim {
            for i in j..dim {
                blk.add_const(i, j, rng.gen_range(-1.0..1.0));
                for v in 0..p {
                    blk.add_coeff(v, i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let x = DVector::from_fn(p, |_, _| rng.gen_range(-2.0..2.0));
        let mut want = blk.const_matrix().into_matrix();
        for v in 0..p {
            want += blk.coeff_matrix(v).into_matrix() * x[v];
        }
        let got = blk.eval(&x);
        prop_assert!((got.as_matrix() - &want).amax() <= 1e-13);
        prop_assert!((got.as_matrix() - got.as_matrix().transpose()).amax() == 0.0);
    }

    #[test]
    fn assembled_matrices_are_symmetric(m in 2usize..12, clamped in any::<bool>(), seed in any::<u64>()) {
        let sup = if clamped { SupportSpec::Clamped } else { SupportSpec::SimplySupported };
        let s = system(m, 0.01, sup);
        let g = s.g(&rand_vec(seed, s.n_sigma(), 20.0));
        prop_assert!((g.as_matrix() - g.as_matrix().transpose()).amax() == 0.0);
        prop_assert!(cdbeam_core::linalg::cholesky(&s.k).is_ok());
    }
}

#[test]
fn bending_solution_is_mirror_symmetric() {
    for sup in [SupportSpec::SimplySupported, SupportSpec::Clamped] {
        let s = system(8, 0.01, sup);
        let w = solve_sym(&s.g0, &s.f_vec).unwrap();
        let (wn, tn) = nodal_fields(&w, &s);
        let n = wn.len();
        for k in 0..n {
            assert!((wn[k] - wn[n - 1 - k]).abs() <= 1e-12);
            assert!((tn[k] + tn[n - 1 - k]).abs() <= 1e-12);
        }
    }
}
