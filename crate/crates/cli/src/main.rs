mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdbeam_core::fem::assemble;
use cdbeam_core::model::{derive_constants, LoadCase, Mesh, SolverSettings};
use cdbeam_core::oracle::multistart_newton;
use cdbeam_core::sdp::{build_branch_sdp, BranchKind};
use cdbeam_core::solver::{run_triality, BranchStatus, TrialityConfig, TrialityReport};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{parse_branches, parse_config, RunConfig, Sweep};

#[derive(Parser)]
#[command(name = "cdbeam", version, about = "Post-buckling branches of the Gao beam by canonical dual PD-SDP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one load case or a sweep and write CSV, JSON, log and plot files.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// `all` or a comma list of global, localmax, localmin.
    #[arg(long)]
    branches: Option<String>,
    /// Element count, overrides the config.
    #[arg(long)]
    elements: Option<usize>,
    /// `lambda=a:b:n` or `elements=20,40,60`.
    #[arg(long)]
    sweep: Option<String>,
    /// Cross-check with multistart Newton on the primal energy.
    #[arg(long)]
    oracle: bool,
    /// Exit 0 even when a requested branch fails.
    #[arg(long)]
    allow_partial: bool,
    /// Concurrent sweep points.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the branch SDPs at the converged states in SDPA format.
    #[arg(long)]
    dump_sdp: bool,
    /// Output directory, overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sweep(spec: &str) -> Result<Sweep, String> {
    let (key, val) = spec.split_once('=').ok_or("expected lambda=a:b:n or elements=m1,m2,...")?;
    match key.trim() {
        "lambda" => {
            let parts: Vec<&str> = val.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("lambda sweep needs a:b:n, got `{val}`"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
            Ok(Sweep::Lambda {
                from: num(parts[0])?,
                to: num(parts[1])?,
                steps: parts[2].trim().parse().map_err(|e| format!("`{}`: {e}", parts[2]))?,
            })
        }
        "elements" => val
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Sweep::Elements),
        other => Err(format!("unknown sweep variable `{other}`")),
    }
}

/// (elements, lambda) pairs in output order.
fn points(cfg: &RunConfig) -> Vec<(usize, f64)> {
    let ms = match &cfg.sweep {
        Some(Sweep::Elements(v)) => v.clone(),
        _ => cfg.elements.clone(),
    };
    let lams = match &cfg.sweep {
        Some(s @ Sweep::Lambda { .. }) => s.lambdas(),
        _ => vec![cfg.lambda],
    };
    ms.iter().flat_map(|&m| lams.iter().map(move |&l| (m, l))).collect()
}

struct PointResult {
    m: usize,
    lambda: f64,
    report: TrialityReport,
}

fn run_point(cfg: &RunConfig, m: usize, lambda: f64, dir: &Path, oracle: bool, dump: bool) -> Result<PointResult, String> {
    let props = derive_constants(cfg.beam.e, cfg.beam.mu, cfg.beam.l, cfg.beam.height / 2.0).map_err(|e| e.to_string())?;
    let load = LoadCase::new(cfg.lateral, lambda).map_err(|e| e.to_string())?;
    let mesh = Mesh::uniform(cfg.beam.l, m).map_err(|e| e.to_string())?;
    let sys = assemble(&props, &load, &cfg.support, &mesh).map_err(|e| e.to_string())?;
    let settings = cfg.solver.apply(SolverSettings::for_scale(sys.g0_max()));
    let tc = TrialityConfig {
        props,
        load,
        support: cfg.support.clone(),
        mesh,
        settings: Some(settings),
        branches: cfg.branches.clone(),
    };
    let report = run_triality(&tc).map_err(|e| e.to_string())?;
    let points = oracle.then(|| multistart_newton(&sys, &settings, 5));
    let mut echo = serde_json::to_value(cfg).map_err(|e| e.to_string())?;
    if let serde_json::Value::Object(map) = &mut echo {
        map.insert("elements".into(), m.into());
        map.insert("lambda".into(), lambda.into());
        map.remove("sweep");
    }
    output::write_point(dir, &report, &sys, echo, points.as_deref()).map_err(|e| format!("{}: {e}", dir.display()))?;
    if dump {
        for b in &report.branches {
            if let Some(s) = b.solution.as_ref().filter(|_| b.status == BranchStatus::Found) {
                let prob = build_branch_sdp(b.kind, &s.w, &sys, &settings, 0.0).map_err(|e| e.to_string())?;
                let path = dir.join(format!("sdp_{}.dat-s", b.kind.name()));
                std::fs::write(&path, prob.to_sdpa()).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
    }
    Ok(PointResult { m, lambda, report })
}

fn sweep_table(results: &[PointResult]) -> String {
    let kinds = [BranchKind::GlobalMin, BranchKind::LocalMax, BranchKind::LocalMin];
    let mut out = String::from("m,lambda,lambda_cr_scaled");
    for k in kinds {
        let n = k.name();
        let _ = write!(out, ",status_{n},pi_p_{n},duality_gap_{n},gap_quadratic_{n}");
    }
    out.push('\n');
    for r in results {
        let _ = write!(out, "{},{:.16e},{:.16e}", r.m, r.lambda, r.report.lambda_cr.scaled);
        for k in kinds {
            match r.report.branch(k) {
                None => out.push_str(",not-requested,,,"),
                Some(b) => {
                    let status = format!("{:?}", b.status).to_lowercase();
                    match b.solution.as_ref().filter(|_| b.status == BranchStatus::Found) {
                        Some(s) => {
                            let dg = s.energy.duality_gap.map_or(String::new(), |d| format!("{d:.16e}"));
                            let _ = write!(out, ",{status},{:.16e},{dg},{:.16e}", s.energy.pi_p, s.energy.gap_quadratic);
                        }
                        None => {
                            let _ = write!(out, ",{status},,,");
                        }
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

fn run(args: RunArgs) -> Result<bool, String> {
    let mut cfg = parse_config(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    if let Some(b) = &args.branches {
        cfg.branches = parse_branches(b).map_err(|e| format!("--branches: {e}"))?;
    }
    if let Some(m) = args.elements {
        cfg.elements = vec![m];
    }
    if let Some(s) = &args.sweep {
        cfg.sweep = Some(parse_sweep(s).map_err(|e| format!("--sweep: {e}"))?);
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or("no output directory: pass --out or set `output` in the config")?;

    let pts = points(&cfg);
    let single = pts.len() == 1;
    let dir_for = |m: usize, l: f64| if single { out.clone() } else { out.join(format!("m{m}_lambda{l}")) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| e.to_string())?;
    let results: Vec<Result<PointResult, String>> = pool.install(|| {
        pts.par_iter()
            .map(|&(m, l)| run_point(&cfg, m, l, &dir_for(m, l), args.oracle, args.dump_sdp))
            .collect()
    });

    let mut ok = true;
    let mut done = Vec::new();
    for r in results {
        match r {
            Ok(p) => {
                for b in &p.report.branches {
                    let extra = b
                        .solution
                        .as_ref()
                        .map(|s| format!(" pi_p={:.10e} class={:?}", s.energy.pi_p, s.classification))
                        .unwrap_or_default();
                    println!("m={} lambda={} {}: {:?}{}", p.m, p.lambda, b.kind.name(), b.status, extra);
                    ok &= b.status != BranchStatus::Failed;
                }
                done.push(p);
            }
            Err(e) => {
                eprintln!("error: {e}");
                ok = false;
            }
        }
    }
    if !single {
        std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
        std::fs::write(out.join("sweep.csv"), sweep_table(&done)).map_err(|e| e.to_string())?;
    }
    Ok(ok || args.allow_partial)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("some requested branches failed (use --allow-partial to accept)");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
