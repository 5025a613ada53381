use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdbeam_core::fem::assemble;
use cdbeam_core::model::*;
use cdbeam_core::DVector;
use serde_json::Value;

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/ss_uniform.cfg")
}

fn cdbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdbeam")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = cdbeam(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p
}

const BASE: &str = r#"
elements = 8

[beam]
E = 1000.0
mu = 0.3
L = 1.0
height = 0.1

[load]
type = "uniform"
magnitude = 0.1
lambda = 0.01
"#;

#[test]
fn example_config_three_branches_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    run_ok(&["run", "--config", example().to_str().unwrap(), "--elements", "10", "--out", out.to_str().unwrap()]);
    let s = summary(&out);
    let classes: Vec<&str> = s["branches"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["classification"].as_str().unwrap())
        .collect();
    assert_eq!(classes, ["GlobalMin", "LocalMax", "LocalMin"]);
    assert!(s["lambda_cr"]["scaled"].as_f64().unwrap() > 0.0);
    assert!(fs::read_to_string(out.join("plot.gp")).unwrap().contains("'red'"));

    // Rebuild (w, σ) from the CSV and recompute the residuals.
    let props = derive_constants(1000.0, 0.3, 1.0, 0.05).unwrap();
    let load = LoadCase::new(Lateral::Uniform(0.1), 0.01).unwrap();
    let sys = assemble(&props, &load, &SupportSpec::SimplySupported, &Mesh::uniform(1.0, 10).unwrap()).unwrap();
    for b in s["branches"].as_array().unwrap() {
        let text = fs::read_to_string(out.join(b["csv"].as_str().unwrap())).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,w,theta,sigma,u"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 11);
        let mut full = DVector::zeros(sys.n_full);
        for (k, r) in rows.iter().enumerate() {
            full[2 * k] = r[1];
            full[2 * k + 1] = r[2];
        }
        let w = sys.extract(&full);
        let sigma = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[3]));
        let eq = (sys.g(&sigma).mul_vec(&w) - &sys.f_vec).norm();
        let con = (sys.a_vec(&w) - sys.k.mul_vec(&sigma) - &sys.lam_vec).norm();
        assert!((eq - b["res_equilibrium"].as_f64().unwrap()).abs() <= 1e-12);
        assert!((con - b["res_constitutive"].as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn global_only_writes_one_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), BASE);
    let out = tmp.path().join("o");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--branches", "global", "--out", out.to_str().unwrap()]);
    let csvs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".csv"))
        .collect();
    assert_eq!(csvs.len(), 1);
    assert!(out.join("branch_global.csv").exists());
}

#[test]
fn missing_lambda_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &BASE.replace("lambda = 0.01\n", ""));
    let out = cdbeam(&["run", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("load.lambda"));
}

#[test]
fn unknown_key_is_rejected_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &BASE.replace("mu = 0.3", "mu = 0.3\npoisson = 0.3"));
    let out = cdbeam(&["run", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success());
    assert!(err.contains("poisson") && err.contains("line"), "{err}");
}

#[test]
fn odd_mesh_with_point_load_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let body = BASE.replace("\"uniform\"", "\"point\"");
    let cfg = write_cfg(tmp.path(), &body);
    let out = cdbeam(&["run", "--config", cfg.to_str().unwrap(), "--elements", "7", "--out", "unused"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success());
    assert!(err.contains("even"), "{err}");
}

#[test]
fn element_sweep_table_and_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), BASE);
    let out = tmp.path().join("o");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep",
        "elements=6,8",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("duality_gap_global") && lines[0].contains("duality_gap_localmin"));
    assert!(lines[1].starts_with("6,") && lines[2].starts_with("8,"));
    assert!(out.join("m6_lambda0.01/summary.json").exists());
    assert!(out.join("m8_lambda0.01/branch_localmin.csv").exists());
}

#[test]
fn lambda_sweep_below_critical_is_not_a_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), BASE);
    let out = tmp.path().join("o");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--sweep", "lambda=0.0001:0.01:2", "--out", out.to_str().unwrap()]);
    let s = summary(&out.join("m8_lambda0.0001"));
    let status: Vec<&str> = s["branches"].as_array().unwrap().iter().map(|b| b["status"].as_str().unwrap()).collect();
    assert_eq!(status[0], "found");
    assert_eq!(status[1], "absent");
    assert_eq!(status[2], "collapsed");
}

#[test]
fn runs_are_deterministic_and_oracle_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &BASE.replace("elements = 8", "elements = 6"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        run_ok(&["run", "--config", cfg.to_str().unwrap(), "--oracle", "--dump-sdp", "--out", d.to_str().unwrap()]);
    }
    for f in ["summary.json", "branch_global.csv", "branch_localmin.csv", "convergence.log", "sdp_global.dat-s"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let s = summary(&a);
    let pts = s["oracle"]["critical_points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    assert!(pts.iter().all(|p| p["matches"].as_array().unwrap().len() == 1));
}
