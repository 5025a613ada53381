use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use cdbeam_core::energy::{nodal_fields, recover_axial};
use cdbeam_core::fem::AssembledSystem;
use cdbeam_core::oracle::CriticalPoint;
use cdbeam_core::sdp::BranchKind;
use cdbeam_core::solver::{BranchResult, BranchSolution, BranchStatus, TrialityReport};
use serde_json::{json, Value};

pub fn color(kind: BranchKind) -> &'static str {
    match kind {
        BranchKind::GlobalMin => "red",
        BranchKind::LocalMax => "green",
        BranchKind::LocalMin => "blue",
    }
}

pub fn csv_name(kind: BranchKind) -> String {
    format!("branch_{}.csv", kind.name())
}

/// Nodal table `x,w,theta,sigma,u` with 17 significant digits.
pub fn branch_csv(sol: &BranchSolution, sys: &AssembledSystem) -> String {
    let (w, theta) = nodal_fields(&sol.w, sys);
    let u = recover_axial(&sol.w, sys);
    let mut out = String::from("x,w,theta,sigma,u\n");
    for k in 0..sys.mesh.n_nodes() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            sys.mesh.node_x[k], w[k], theta[k], sol.sigma[k], u[k]
        );
    }
    out
}

fn status_name(s: BranchStatus) -> &'static str {
    match s {
        BranchStatus::Found => "found",
        BranchStatus::Absent => "absent",
        BranchStatus::Collapsed => "collapsed",
        BranchStatus::Failed => "failed",
    }
}

fn branch_json(b: &BranchResult) -> Value {
    let mut v = json!({
        "kind": b.kind.name(),
        "status": status_name(b.status),
        "message": b.message,
    });
    if let Some(s) = &b.solution {
        let e = &s.energy;
        let extra = json!({
            "converged": s.converged,
            "iterations": s.iterations,
            "classification": format!("{:?}", s.classification),
            "pi_p": e.pi_p,
            "xi": e.xi,
            "pi_d": e.pi_d,
            "gap_quadratic": e.gap_quadratic,
            "duality_gap": e.duality_gap,
            "res_equilibrium": e.res_equilibrium,
            "res_constitutive": e.res_constitutive,
            "inertia_G": [s.inertia_g.0, s.inertia_g.1, s.inertia_g.2],
            "min_eig_hess": s.min_eig_hess,
            "global_certificate": s.global_certificate,
            "csv": csv_name(s.kind),
        });
        if let (Value::Object(a), Value::Object(b)) = (&mut v, extra) {
            a.extend(b);
        }
    }
    v
}

fn oracle_json(points: &[CriticalPoint], rep: &TrialityReport) -> Value {
    let pts: Vec<Value> = points
        .iter()
        .map(|p| {
            let matched: Vec<&str> = rep
                .branches
                .iter()
                .filter_map(|b| b.solution.as_ref().map(|s| (b.kind, s)))
                .filter(|(_, s)| (&s.w - &p.w).amax() <= 1e-6 * (1.0 + s.w.amax()))
                .map(|(k, _)| k.name())
                .collect();
            json!({
                "pi_p": p.pi_p,
                "kind": format!("{:?}", p.kind),
                "hess_inertia": [p.hess_inertia.0, p.hess_inertia.1, p.hess_inertia.2],
                "max_abs_w": p.w.amax(),
                "matches": matched,
            })
        })
        .collect();
    json!({ "critical_points": pts })
}

pub fn summary_json(rep: &TrialityReport, config_echo: Value, oracle: Option<&[CriticalPoint]>) -> Value {
    let mut v = json!({
        "config": config_echo,
        "elements": rep.config.mesh.m,
        "lambda": rep.config.load.axial_lambda,
        "settings": rep.settings,
        "lambda_cr": { "rayleigh": rep.lambda_cr.rayleigh, "scaled": rep.lambda_cr.scaled },
        "branches": rep.branches.iter().map(branch_json).collect::<Vec<_>>(),
    });
    if let (Some(points), Value::Object(map)) = (oracle, &mut v) {
        map.insert("oracle".into(), oracle_json(points, rep));
    }
    v
}

pub fn convergence_log(rep: &TrialityReport) -> String {
    let mut out = String::new();
    for b in &rep.branches {
        let _ = writeln!(out, "# {} {}: {}", b.kind.name(), status_name(b.status), b.message);
        let Some(s) = &b.solution else { continue };
        let _ = writeln!(out, "# k rho accepted rel_step pi_p sdp_status sdp_iterations note");
        for h in &s.history {
            let _ = writeln!(
                out,
                "{} {:.6e} {} {:.6e} {:.16e} {} {} {}",
                h.k, h.rho, h.accepted, h.step, h.pi_p, h.sdp_status, h.sdp_iterations, h.note
            );
        }
    }
    out
}

pub fn plot_script(rep: &TrialityReport) -> String {
    let series: Vec<String> = rep
        .branches
        .iter()
        .filter(|b| b.solution.is_some() && b.status == BranchStatus::Found)
        .map(|b| {
            format!(
                "'{}' using 1:2 with linespoints lc rgb '{}' title '{}'",
                csv_name(b.kind),
                color(b.kind),
                b.kind.name()
            )
        })
        .collect();
    let mut out = String::new();
    out.push_str("set datafile separator ','\n");
    out.push_str("set key autotitle columnhead\n");
    out.push_str("set xlabel 'x'\nset ylabel 'w'\n");
    let _ = writeln!(out, "set title 'lambda = {}, m = {}'", rep.config.load.axial_lambda, rep.config.mesh.m);
    if series.is_empty() {
        out.push_str("# no converged branch to plot\n");
    } else {
        let _ = writeln!(out, "plot {}", series.join(", \\\n     "));
    }
    out
}

pub fn write_point(
    dir: &Path,
    rep: &TrialityReport,
    sys: &AssembledSystem,
    config_echo: Value,
    oracle: Option<&[CriticalPoint]>,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for b in &rep.branches {
        if let Some(s) = b.solution.as_ref().filter(|_| b.status == BranchStatus::Found) {
            fs::write(dir.join(csv_name(b.kind)), branch_csv(s, sys))?;
        }
    }
    let summary = summary_json(rep, config_echo, oracle);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(dir.join("convergence.log"), convergence_log(rep))?;
    fs::write(dir.join("plot.gp"), plot_script(rep))?;
    Ok(())
}
