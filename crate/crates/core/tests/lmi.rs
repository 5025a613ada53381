use cdbeam_core::energy::total_potential;
use cdbeam_core::fem::assemble;
use cdbeam_core::linalg::solve_sym;
use cdbeam_core::model::*;
use cdbeam_core::sdp::*;
use cdbeam_core::solver::{run_triality, TrialityConfig};
use cdbeam_core::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fifty_diagonal_problems_match_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    for case in 0..50 {
        let p = rng.gen_range(1..7);
        let c = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
        let sense = if case % 2 == 0 { Sense::Maximize } else { Sense::Minimize };
        let mut prob = LmiProblem::new(p, c.clone(), sense);
        let mut rows = Vec::new();
        for var in 0..p {
            let x0: f64 = rng.gen_range(-3.0..3.0);
            for sgn in [1.0, -1.0] {
                for _ in 0..rng.gen_range(1..4) {
                    let g: f64 = sgn * rng.gen_range(0.2..3.0);
                    rows.push((var, g, -g * x0 + rng.gen_range(0.05..2.0)));
                }
            }
        }
        let mut blk = LmiBlock::new(rows.len(), p);
        for (k, &(var, g, d)) in rows.iter().enumerate() {
            blk.add_const(k, k, d);
            blk.add_coeff(var, k, k, g);
        }
        prob.add_block(blk);
        let sol = solve_lmi(&prob, &LmiSettings::default());
        assert_eq!(sol.status, LmiStatus::Optimal, "case {case}");
        for var in 0..p {
            let lo = rows.iter().filter(|r| r.0 == var && r.1 > 0.0).map(|r| -r.2 / r.1).fold(f64::NEG_INFINITY, f64::max);
            let hi = rows.iter().filter(|r| r.0 == var && r.1 < 0.0).map(|r| -r.2 / r.1).fold(f64::INFINITY, f64::min);
            let up = (c[var] > 0.0) == (sense == Sense::Maximize);
            let want = if up { hi } else { lo };
            assert!((sol.x[var] - want).abs() <= 1e-8 * (1.0 + want.abs()), "case {case} var {var}");
        }
    }
}

#[test]
fn branch_block_dimensions_ss_m40() {
    let props = derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap();
    let load = LoadCase::new(Lateral::Uniform(0.1), 0.01).unwrap();
    let sys = assemble(&props, &load, &SupportSpec::SimplySupported, &Mesh::uniform(1.0, 40).unwrap()).unwrap();
    let st = SolverSettings::for_scale(sys.g0_max());
    let w = solve_sym(&sys.g0, &sys.f_vec).unwrap();
    let g = build_branch_sdp(BranchKind::GlobalMin, &w, &sys, &st, 0.0).unwrap();
    assert_eq!(g.block_dims(), vec![81, 42]);
    assert_eq!(g.p, 43);
    let x = build_branch_sdp(BranchKind::LocalMax, &w, &sys, &st, 0.0).unwrap();
    let k = unstable_subspace(&w, &sys, st.strictness_eps).unwrap().ncols();
    assert!(k >= 1);
    assert_eq!(x.block_dims(), vec![k, 42]);
    let dump = g.to_sdpa();
    assert_eq!(dump.lines().nth(1), Some("43"));
    assert_eq!(dump.lines().nth(2), Some("2"));
}

#[test]
fn global_sdp_value_is_the_primal_minimum_when_g_is_definite() {
    // Below the point where G at the minimizer loses definiteness the canonical
    // dual has no gap: the SDP optimum equals min Π_p.
    let cfg = TrialityConfig {
        props: derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap(),
        load: LoadCase::new(Lateral::Uniform(0.1), 0.005).unwrap(),
        support: SupportSpec::SimplySupported,
        mesh: Mesh::uniform(1.0, 10).unwrap(),
        settings: None,
        branches: vec![BranchKind::GlobalMin],
    };
    let sys = assemble(&cfg.props, &cfg.load, &cfg.support, &cfg.mesh).unwrap();
    let rep = run_triality(&cfg).unwrap();
    let g = rep.found(BranchKind::GlobalMin).unwrap();
    assert!(g.global_certificate);
    let w0 = solve_sym(&sys.g0, &sys.f_vec).unwrap();
    let prob = build_branch_sdp(BranchKind::GlobalMin, &w0, &sys, &rep.settings, 0.0).unwrap();
    let sol = solve_lmi(&prob, &LmiSettings::from(&rep.settings));
    let pi = total_potential(&g.w, &sys);
    assert!((sol.objective_value - pi).abs() <= 1e-7 * (1.0 + pi.abs()), "{} {}", sol.objective_value, pi);
}
