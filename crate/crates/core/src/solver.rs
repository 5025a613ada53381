//! Outer PD-SDP iterations for each branch, triality classification and
//! the three-branch driver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::buckling::{critical_load_of, CriticalLoad};
use crate::energy::{
    dual_hessian, gap_and_residuals, primal_hessian, stationary_stress, total_potential,
    EnergyReport,
};
use crate::fem::{assemble, AssembledSystem};
use crate::linalg::{inertia, ldl_factor, min_eig, solve_sym, Ldl, SymMatrix};
use crate::model::{BeamProperties, LoadCase, Mesh, SolverSettings, SupportSpec};
use crate::sdp::{build_branch_sdp, solve_lmi, BranchKind, LmiSettings, LmiStatus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    GlobalMin,
    LocalMax,
    LocalMin,
    Indeterminate,
}

/// One outer iteration, kept for the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub rho: f64,
    pub accepted: bool,
    pub step: f64,
    pub pi_p: f64,
    pub sdp_status: String,
    pub sdp_iterations: usize,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct BranchSolution {
    pub kind: BranchKind,
    pub w: DVector<f64>,
    pub sigma: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub energy: EnergyReport,
    pub classification: Classification,
    pub inertia_g: (usize, usize, usize),
    pub min_eig_hess: f64,
    /// G(σ) ⪰ 0 within classify_tol: the sufficient condition for a global minimum.
    pub global_certificate: bool,
    pub history: Vec<IterRecord>,
}

/// Accepted proximal steps must keep λ_min(G(σ)+ρI) above this fraction of max(ρ, ρ_floor).
const CERT_FRACTION: f64 = 0.1;
const DIVERGENCE_FACTOR: f64 = 1e6;
/// IPM runs that stop short of `sdp_tol` are still usable if the dual polish can take over.
const SDP_USABLE_ACCURACY: f64 = 1e-6;

fn rel_step(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let d = (new - old).norm();
    if d == 0.0 {
        0.0
    } else {
        d / new.norm().max(f64::MIN_POSITIVE)
    }
}

fn status_name(s: LmiStatus) -> &'static str {
    match s {
        LmiStatus::Optimal => "optimal",
        LmiStatus::Infeasible => "infeasible",
        LmiStatus::IterationLimit => "iteration-limit",
        LmiStatus::NumericalFailure => "numerical-failure",
    }
}

struct DualPoint {
    sigma: DVector<f64>,
    w: DVector<f64>,
    grad: DVector<f64>,
    ldl: Ldl,
}

/// Evaluates the proximal dual at σ; None outside {G(σ)+ρI ≻ 0}.
fn dual_point(sys: &AssembledSystem, sigma: DVector<f64>, r: &DVector<f64>, rho: f64) -> Option<DualPoint> {
    let gt = sys.g(&sigma).shifted(rho);
    let ldl = ldl_factor(&gt);
    let (_, neg, zero) = ldl.inertia();
    if neg + zero > 0 {
        return None;
    }
    let w = ldl.solve(r).ok()?;
    let grad = sys.a_vec(&w) - sys.k.mul_vec(&sigma) - &sys.lam_vec;
    if !grad.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(DualPoint { sigma, w, grad, ldl })
}

/// Damped Newton ascent on the concave D_ρ(σ) = −½rᵀ(G(σ)+ρI)⁻¹r − ½σᵀKσ − λᵀσ,
/// started from the IPM answer. Gradient a(w) − Kσ − λ, Hessian −K − Bᵀ(G+ρI)⁻¹B.
fn polish_dual(sys: &AssembledSystem, sigma0: DVector<f64>, r: &DVector<f64>, rho: f64) -> Option<DVector<f64>> {
    let mut cur = dual_point(sys, sigma0, r, rho)?;
    for _ in 0..12 {
        let gnorm = cur.grad.norm();
        let floor = 1e-15 * (1.0 + sys.lam_vec.norm() + sys.k.mul_vec(&cur.sigma).norm());
        if gnorm <= floor {
            break;
        }
        let b = sys.b_matrix(&cur.w);
        let mut gib = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = cur.ldl.solve(&b.column(j).clone_owned()).ok()?;
            gib.set_column(j, &col);
        }
        let hn = SymMatrix::from_dmatrix(sys.k.as_matrix() + b.transpose() * gib).ok()?;
        let delta = solve_sym(&hn, &cur.grad).ok()?;
        let mut t = 1.0;
        let mut next = None;
        while t > 1e-6 {
            if let Some(p) = dual_point(sys, &cur.sigma + &delta * t, r, rho) {
                if p.grad.norm() < gnorm {
                    next = Some(p);
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(p) => cur = p,
            None => break,
        }
    }
    Some(cur.sigma)
}

struct ProxTrial {
    sigma: DVector<f64>,
    w: DVector<f64>,
    sdp_status: LmiStatus,
    sdp_iterations: usize,
}

/// One proximal canonical-dual step from w_k. Err carries the rejection reason.
fn prox_step(
    kind: BranchKind,
    sys: &AssembledSystem,
    settings: &SolverSettings,
    w_k: &DVector<f64>,
    rho: f64,
    rho_floor: f64,
) -> std::result::Result<ProxTrial, (String, Option<LmiStatus>, usize)> {
    let prob = build_branch_sdp(kind, w_k, sys, settings, rho).map_err(|e| (e.to_string(), None, 0))?;
    let sol = solve_lmi(&prob, &LmiSettings::from(settings));
    let fail = |msg: &str| (msg.to_string(), Some(sol.status), sol.iterations);
    let usable = sol.status == LmiStatus::Optimal
        || (sol.status != LmiStatus::Infeasible && sol.accuracy <= SDP_USABLE_ACCURACY);
    if !usable {
        return Err(fail("sdp unusable"));
    }
    let ns = sys.n_sigma();
    let r = &sys.f_vec + w_k * rho;
    let sigma = polish_dual(sys, sol.x.rows(0, ns).clone_owned(), &r, rho)
        .ok_or_else(|| fail("dual on the boundary of G+rho I > 0"))?;
    let margin = CERT_FRACTION * rho.max(rho_floor);
    let gt = sys.g(&sigma).shifted(rho);
    if ldl_factor(&gt.shifted(-margin)).inertia().1 > 0 {
        return Err(fail("no strong-duality certificate"));
    }
    let w = solve_sym(&gt, &r).map_err(|_| fail("singular G+rho I"))?;
    Ok(ProxTrial {
        sigma,
        w,
        sdp_status: sol.status,
        sdp_iterations: sol.iterations,
    })
}

/// Proximal PD-SDP for the two minimum branches.
fn proximal_branch(
    kind: BranchKind,
    sys: &AssembledSystem,
    settings: &SolverSettings,
    w0: &DVector<f64>,
) -> Result<BranchSolution> {
    let rho_floor = 1e-3 * min_eig(&sys.g0)?;
    let basin = (kind == BranchKind::LocalMin).then(|| 0.5 * w0.norm());
    let mut rho = if kind == BranchKind::LocalMin {
        let lmin = min_eig(&sys.g(&stationary_stress(w0, sys)))?;
        (1.5 * (-lmin)).max(rho_floor)
    } else {
        0.0
    };
    let tol_eq = settings.outer_tol * (1.0 + sys.f_vec.norm());
    let guard = DIVERGENCE_FACTOR * w0.norm().max(f64::MIN_POSITIVE);
    let g0_max = sys.g0_max();
    let rho_cap = 1e8 * (1.0 + g0_max);

    let mut w = w0.clone();
    let mut sigma = stationary_stress(w0, sys);
    let mut pi = total_potential(&w, sys);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut hint: Option<f64> = None;
    for k in 1..=settings.outer_max_iter {
        iterations = k;
        let rec_rho = rho;
        let trial = prox_step(kind, sys, settings, &w, rho, rho_floor);
        let verdict = match trial {
            Err(reason) => Err(reason),
            Ok(t) => {
                let pi_n = total_potential(&t.w, sys);
                let info = (Some(t.sdp_status), t.sdp_iterations);
                // Π_p is evaluated through G0 ~ EI/Le³; allow for its roundoff.
                let noise = 1e-12 * (1.0 + pi.abs()) + 1e-14 * g0_max * w.norm_squared();
                if pi_n > pi + noise {
                    Err(("no descent".to_string(), info.0, info.1))
                } else if basin.is_some_and(|rad| (&t.w - &w).norm() > rad) {
                    Err(("left the seed basin".to_string(), info.0, info.1))
                } else {
                    Ok((t, pi_n))
                }
            }
        };
        match verdict {
            Err((note, status, its)) => {
                history.push(IterRecord {
                    k,
                    rho: rec_rho,
                    accepted: false,
                    step: f64::NAN,
                    pi_p: pi,
                    sdp_status: status.map_or("error", status_name).to_string(),
                    sdp_iterations: its,
                    note,
                });
                // Jump straight to the shift suggested by the curvature at w_k.
                if hint.is_none() {
                    let lmin = min_eig(&sys.g(&stationary_stress(&w, sys)))?;
                    hint = Some(1.5 * (-lmin).max(0.0));
                }
                rho = (4.0 * rho).max(rho_floor).max(hint.unwrap_or(0.0));
                if rho > rho_cap {
                    break;
                }
            }
            Ok((t, pi_n)) => {
                let step = rel_step(&t.w, &w);
                hint = None;
                w = t.w;
                sigma = t.sigma;
                pi = pi_n;
                history.push(IterRecord {
                    k,
                    rho: rec_rho,
                    accepted: true,
                    step,
                    pi_p: pi,
                    sdp_status: status_name(t.sdp_status).to_string(),
                    sdp_iterations: t.sdp_iterations,
                    note: String::new(),
                });
                if w.norm() > guard {
                    break;
                }
                let res = (sys.g(&sigma).mul_vec(&w) - &sys.f_vec).norm();
                if step <= settings.outer_tol && res <= tol_eq {
                    converged = true;
                    break;
                }
                let lmin = min_eig(&sys.g(&sigma))?;
                rho = (0.5 * rho).max(1.5 * (-lmin).max(0.0));
            }
        }
    }
    finish(kind, sys, settings, w, sigma, iterations, converged, history)
}

/// Frozen-w SDP on the unstable subspace, then w = G(σ)⁻¹f.
fn local_max_branch(sys: &AssembledSystem, settings: &SolverSettings, w0: &DVector<f64>) -> Result<BranchSolution> {
    let lmi = LmiSettings::from(settings);
    let ns = sys.n_sigma();
    let guard = DIVERGENCE_FACTOR * w0.norm().max(f64::MIN_POSITIVE);
    let mut w = w0.clone();
    let mut sigma = stationary_stress(w0, sys);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=settings.outer_max_iter {
        iterations = k;
        let prob = build_branch_sdp(BranchKind::LocalMax, &w, sys, settings, 0.0)?;
        let sol = solve_lmi(&prob, &lmi);
        match sol.status {
            LmiStatus::Infeasible => {
                return Err(Error::Infeasible(format!(
                    "G(sigma) has no unstable direction at iteration {k}"
                )))
            }
            LmiStatus::Optimal => {}
            s if sol.accuracy <= SDP_USABLE_ACCURACY => {
                let _ = s;
            }
            s => {
                return Err(Error::Sdp(format!(
                    "local-max SDP {} at iteration {k} (accuracy {:e})",
                    status_name(s),
                    sol.accuracy
                )))
            }
        }
        // The maximizer of the concave Ξ(w, ·) is σ̂(w); prefer it when the IPM landed next to it.
        let s_sdp = sol.x.rows(0, ns).clone_owned();
        let s_hat = stationary_stress(&w, sys);
        sigma = if (&s_sdp - &s_hat).norm() <= 1e-5 * (1.0 + s_hat.norm()) {
            s_hat
        } else {
            s_sdp
        };
        let w_new = solve_sym(&sys.g(&sigma), &sys.f_vec).map_err(|_| Error::SingularGap)?;
        let step = rel_step(&w_new, &w);
        w = w_new;
        history.push(IterRecord {
            k,
            rho: 0.0,
            accepted: true,
            step,
            pi_p: total_potential(&w, sys),
            sdp_status: status_name(sol.status).to_string(),
            sdp_iterations: sol.iterations,
            note: String::new(),
        });
        if w.norm() > guard {
            break;
        }
        if step <= settings.outer_tol {
            converged = true;
            break;
        }
    }
    finish(BranchKind::LocalMax, sys, settings, w, sigma, iterations, converged, history)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: BranchKind,
    sys: &AssembledSystem,
    settings: &SolverSettings,
    w: DVector<f64>,
    sigma: DVector<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<IterRecord>,
) -> Result<BranchSolution> {
    let g = sys.g(&sigma);
    let inertia_g = inertia(&g, settings.classify_tol);
    let mut sol = BranchSolution {
        kind,
        energy: gap_and_residuals(&w, &sigma, sys),
        min_eig_hess: min_eig(&primal_hessian(&w, sys))?,
        global_certificate: inertia_g.1 == 0,
        inertia_g,
        w,
        sigma,
        iterations,
        converged,
        classification: Classification::Indeterminate,
        history,
    };
    sol.classification = classify(&sol, sys, settings);
    Ok(sol)
}

/// Runs one branch from `w0`.
///
/// GlobalMin and LocalMin use proximal canonical-dual steps; LocalMax freezes
/// w in the SDP and restricts the definiteness block to the unstable subspace.
/// An infeasible LocalMax SDP (no unstable direction) returns `Error::Infeasible`.
pub fn pdsdp_branch(
    kind: BranchKind,
    sys: &AssembledSystem,
    settings: &SolverSettings,
    w0: &DVector<f64>,
) -> Result<BranchSolution> {
    if w0.len() != sys.n_red {
        return Err(Error::Domain(format!(
            "initial vector has length {}, expected {}",
            w0.len(),
            sys.n_red
        )));
    }
    settings.validate()?;
    match kind {
        BranchKind::LocalMax => local_max_branch(sys, settings, w0),
        _ => proximal_branch(kind, sys, settings, w0),
    }
}

/// Triality label from the gap sign, the primal Hessian and, for the
/// unbuckled state, the dual Hessian.
pub fn classify(sol: &BranchSolution, sys: &AssembledSystem, settings: &SolverSettings) -> Classification {
    let (w, sigma) = (&sol.w, &sol.sigma);
    let gap = 0.5 * sys.g(sigma).quad(w);
    let gap_tol = 1e-10 * (1.0 + sys.f_vec.dot(w).abs());
    let hp = inertia(&primal_hessian(w, sys), settings.classify_tol);
    if hp.1 == 0 {
        return if gap >= -gap_tol {
            Classification::GlobalMin
        } else {
            Classification::LocalMin
        };
    }
    if gap >= -gap_tol {
        return Classification::Indeterminate;
    }
    match dual_hessian(sigma, sys) {
        Ok(hd) => {
            let tol = 1e-9 * hd.max_abs();
            if inertia(&hd, tol).0 == 0 {
                Classification::LocalMax
            } else {
                Classification::Indeterminate
            }
        }
        Err(_) => Classification::Indeterminate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialityConfig {
    pub props: BeamProperties,
    pub load: LoadCase,
    pub support: SupportSpec,
    pub mesh: Mesh,
    /// None selects `SolverSettings::for_scale` on the assembled G0.
    pub settings: Option<SolverSettings>,
    pub branches: Vec<BranchKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchStatus {
    Found,
    /// No such state for this load (infeasible SDP).
    Absent,
    /// Converged onto another branch's state.
    Collapsed,
    Failed,
}

#[derive(Debug, Clone)]
pub struct BranchResult {
    pub kind: BranchKind,
    pub status: BranchStatus,
    pub solution: Option<BranchSolution>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct TrialityReport {
    pub config: TrialityConfig,
    pub settings: SolverSettings,
    pub lambda_cr: CriticalLoad,
    pub branches: Vec<BranchResult>,
}

impl TrialityReport {
    pub fn branch(&self, kind: BranchKind) -> Option<&BranchResult> {
        self.branches.iter().find(|b| b.kind == kind)
    }

    /// The solution of `kind` if it was found.
    pub fn found(&self, kind: BranchKind) -> Option<&BranchSolution> {
        self.branch(kind)
            .filter(|b| b.status == BranchStatus::Found)
            .and_then(|b| b.solution.as_ref())
    }
}

fn same_state(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).amax() <= 1e-6 * (1.0 + b.amax())
}

fn to_result(kind: BranchKind, r: Result<BranchSolution>) -> BranchResult {
    match r {
        Ok(sol) if sol.converged => BranchResult {
            kind,
            status: BranchStatus::Found,
            message: format!("converged in {} iterations", sol.iterations),
            solution: Some(sol),
        },
        Ok(sol) => BranchResult {
            kind,
            status: BranchStatus::Failed,
            message: format!("not converged after {} iterations", sol.iterations),
            solution: Some(sol),
        },
        Err(Error::Infeasible(msg)) => BranchResult {
            kind,
            status: BranchStatus::Absent,
            message: msg,
            solution: None,
        },
        Err(e) => BranchResult {
            kind,
            status: BranchStatus::Failed,
            message: e.to_string(),
            solution: None,
        },
    }
}

/// Assembles the system and runs the requested branches.
///
/// GlobalMin and LocalMax start from the pure-bending deflection G0⁻¹f and
/// run concurrently; LocalMin starts from the negated global minimizer, so
/// GlobalMin is always computed when LocalMin is requested.
pub fn run_triality(config: &TrialityConfig) -> Result<TrialityReport> {
    let sys = assemble(&config.props, &config.load, &config.support, &config.mesh)?;
    let settings = config.settings.unwrap_or_else(|| SolverSettings::for_scale(sys.g0_max()));
    settings.validate()?;
    let lambda_cr = critical_load_of(&sys)?;
    let wants = |k| config.branches.contains(&k);
    let w_bend = solve_sym(&sys.g0, &sys.f_vec)?;

    let need_global = wants(BranchKind::GlobalMin) || wants(BranchKind::LocalMin);
    let (global, local_max) = rayon::join(
        || need_global.then(|| to_result(BranchKind::GlobalMin, pdsdp_branch(BranchKind::GlobalMin, &sys, &settings, &w_bend))),
        || {
            wants(BranchKind::LocalMax)
                .then(|| to_result(BranchKind::LocalMax, pdsdp_branch(BranchKind::LocalMax, &sys, &settings, &w_bend)))
        },
    );

    let local_min = wants(BranchKind::LocalMin).then(|| {
        let seed = global
            .as_ref()
            .filter(|g| g.status == BranchStatus::Found)
            .and_then(|g| g.solution.as_ref());
        match seed {
            None => BranchResult {
                kind: BranchKind::LocalMin,
                status: BranchStatus::Failed,
                solution: None,
                message: "no converged global minimizer to seed from".into(),
            },
            Some(g) => {
                let mut r = to_result(BranchKind::LocalMin, pdsdp_branch(BranchKind::LocalMin, &sys, &settings, &-&g.w));
                if let Some(s) = r.solution.as_ref().filter(|_| r.status == BranchStatus::Found) {
                    if same_state(&s.w, &g.w) {
                        r.status = BranchStatus::Collapsed;
                        r.message = "converged onto the global minimizer".into();
                    }
                }
                r
            }
        }
    });

    let global_w = global
        .as_ref()
        .filter(|g| g.status == BranchStatus::Found)
        .and_then(|g| g.solution.as_ref())
        .map(|s| s.w.clone());
    let local_max = local_max.map(|mut m| {
        if let (Some(s), Some(gw)) = (m.solution.as_ref(), global_w.as_ref()) {
            if m.status == BranchStatus::Found && same_state(&s.w, gw) {
                m.status = BranchStatus::Collapsed;
                m.message = "converged onto the global minimizer".into();
            }
        }
        m
    });
    let mut branches: Vec<BranchResult> = global.filter(|_| wants(BranchKind::GlobalMin)).into_iter().collect();
    branches.extend(local_max);
    branches.extend(local_min);
    Ok(TrialityReport {
        config: config.clone(),
        settings,
        lambda_cr,
        branches,
    })
}
