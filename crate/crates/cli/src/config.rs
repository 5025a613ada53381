use std::path::{Path, PathBuf};

use cdbeam_core::model::{derive_constants, Lateral, LoadCase, Mesh, SolverSettings, SupportSpec};
use cdbeam_core::sdp::BranchKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeam {
    #[serde(rename = "E")]
    e: Option<f64>,
    mu: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
    height: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    #[serde(rename = "type")]
    kind: Option<String>,
    magnitude: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    from: f64,
    to: f64,
    steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    lambda: Option<RawRange>,
    elements: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    outer_tol: Option<f64>,
    outer_max_iter: Option<usize>,
    sdp_tol: Option<f64>,
    sdp_max_iter: Option<usize>,
    strictness_eps: Option<f64>,
    classify_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawElements {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawBranches {
    Word(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    support: Option<String>,
    elements: Option<RawElements>,
    branches: Option<RawBranches>,
    output: Option<PathBuf>,
    beam: Option<RawBeam>,
    load: Option<RawLoad>,
    sweep: Option<RawSweep>,
    solver: Option<RawSolver>,
}

/// Solver overrides; unset fields take the defaults scaled by max|G0|.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverOverrides {
    pub outer_tol: Option<f64>,
    pub outer_max_iter: Option<usize>,
    pub sdp_tol: Option<f64>,
    pub sdp_max_iter: Option<usize>,
    pub strictness_eps: Option<f64>,
    pub classify_tol: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, mut s: SolverSettings) -> SolverSettings {
        if let Some(v) = self.outer_tol {
            s.outer_tol = v;
        }
        if let Some(v) = self.outer_max_iter {
            s.outer_max_iter = v;
        }
        if let Some(v) = self.sdp_tol {
            s.sdp_tol = v;
        }
        if let Some(v) = self.sdp_max_iter {
            s.sdp_max_iter = v;
        }
        if let Some(v) = self.strictness_eps {
            s.strictness_eps = v;
        }
        if let Some(v) = self.classify_tol {
            s.classify_tol = v;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamSpec {
    #[serde(rename = "E")]
    pub e: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Sweep {
    Lambda { from: f64, to: f64, steps: usize },
    Elements(Vec<usize>),
}

impl Sweep {
    pub fn lambdas(&self) -> Vec<f64> {
        match *self {
            Sweep::Lambda { from, to, steps } if steps > 1 => (0..steps)
                .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
                .collect(),
            Sweep::Lambda { from, .. } => vec![from],
            Sweep::Elements(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub beam: BeamSpec,
    pub lateral: Lateral,
    pub lambda: f64,
    pub support: SupportSpec,
    pub elements: Vec<usize>,
    pub branches: Vec<BranchKind>,
    pub sweep: Option<Sweep>,
    pub solver: SolverOverrides,
    pub output: Option<PathBuf>,
}

pub fn parse_branches(spec: &str) -> Result<Vec<BranchKind>, String> {
    let mut out = Vec::new();
    for word in spec.split(',').map(str::trim) {
        let kinds: &[BranchKind] = match word {
            "all" => &[BranchKind::GlobalMin, BranchKind::LocalMax, BranchKind::LocalMin],
            "global" => &[BranchKind::GlobalMin],
            "localmax" => &[BranchKind::LocalMax],
            "localmin" => &[BranchKind::LocalMin],
            other => return Err(format!("unknown branch `{other}` (use all, global, localmax, localmin)")),
        };
        for k in kinds {
            if !out.contains(k) {
                out.push(*k);
            }
        }
    }
    Ok(out)
}

fn positive(key: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    let v = v.ok_or_else(|| invalid(key, "is required"))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(key, format!("must be a positive number, got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let beam = raw.beam.ok_or_else(|| invalid("beam", "table is required"))?;
        let beam = BeamSpec {
            e: positive("beam.E", beam.e)?,
            mu: beam.mu.ok_or_else(|| invalid("beam.mu", "is required"))?,
            l: positive("beam.L", beam.l)?,
            height: positive("beam.height", beam.height)?,
        };
        derive_constants(beam.e, beam.mu, beam.l, beam.height / 2.0)
            .map_err(|e| invalid("beam", e.to_string()))?;

        let load = raw.load.ok_or_else(|| invalid("load", "table is required"))?;
        let magnitude = load.magnitude.ok_or_else(|| invalid("load.magnitude", "is required"))?;
        if !magnitude.is_finite() {
            return Err(invalid("load.magnitude", "must be finite"));
        }
        let lateral = match load.kind.as_deref().unwrap_or("uniform") {
            "uniform" => Lateral::Uniform(magnitude),
            "point" => Lateral::CenterPoint(magnitude),
            other => return Err(invalid("load.type", format!("expected `uniform` or `point`, got `{other}`"))),
        };
        let lambda = load.lambda.ok_or_else(|| invalid("load.lambda", "is required"))?;
        LoadCase::new(lateral, lambda).map_err(|e| invalid("load.lambda", e.to_string()))?;

        let support = match raw.support.as_deref().unwrap_or("simply_supported") {
            "simply_supported" => SupportSpec::SimplySupported,
            "clamped" => SupportSpec::Clamped,
            other => {
                return Err(invalid(
                    "support",
                    format!("expected `simply_supported` or `clamped`, got `{other}`"),
                ))
            }
        };

        let elements = match raw.elements {
            None => vec![40],
            Some(RawElements::One(m)) => vec![m],
            Some(RawElements::Many(v)) => v,
        };
        let branches = match raw.branches {
            None => parse_branches("all"),
            Some(RawBranches::Word(w)) => parse_branches(&w),
            Some(RawBranches::List(v)) => parse_branches(&v.join(",")),
        }
        .map_err(|e| invalid("branches", e))?;

        let sweep = match raw.sweep {
            None => None,
            Some(RawSweep { lambda: Some(r), elements: None }) => Some(Sweep::Lambda {
                from: r.from,
                to: r.to,
                steps: r.steps,
            }),
            Some(RawSweep { lambda: None, elements: Some(v) }) => Some(Sweep::Elements(v)),
            Some(_) => return Err(invalid("sweep", "give exactly one of `lambda` or `elements`")),
        };

        let s = raw.solver.unwrap_or_default();
        let cfg = RunConfig {
            beam,
            lateral,
            lambda,
            support,
            elements,
            branches,
            sweep,
            solver: SolverOverrides {
                outer_tol: s.outer_tol,
                outer_max_iter: s.outer_max_iter,
                sdp_tol: s.sdp_tol,
                sdp_max_iter: s.sdp_max_iter,
                strictness_eps: s.strictness_eps,
                classify_tol: s.classify_tol,
            },
            output: raw.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that depend on more than one key; rerun after CLI overrides.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.elements.is_empty() {
            return Err(invalid("elements", "at least one element count is required"));
        }
        let mut all_m = self.elements.clone();
        if let Some(Sweep::Elements(v)) = &self.sweep {
            if v.is_empty() {
                return Err(invalid("sweep.elements", "must not be empty"));
            }
            all_m.extend(v);
        }
        if let Some(Sweep::Lambda { from, to, steps }) = self.sweep {
            if steps == 0 {
                return Err(invalid("sweep.lambda.steps", "must be at least 1"));
            }
            for (k, v) in [("sweep.lambda.from", from), ("sweep.lambda.to", to)] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(invalid(k, format!("must be >= 0, got {v}")));
                }
            }
        }
        let key = if matches!(self.sweep, Some(Sweep::Elements(_))) { "sweep.elements" } else { "elements" };
        for &m in &all_m {
            let mesh = Mesh::uniform(self.beam.l, m).map_err(|e| invalid(key, e.to_string()))?;
            LoadCase::new(self.lateral, self.lambda)
                .and_then(|l| l.check_mesh(&mesh))
                .map_err(|e| invalid(key, e.to_string()))?;
        }
        if self.branches.is_empty() {
            return Err(invalid("branches", "no branch requested"));
        }
        let probe = self.solver.apply(SolverSettings::for_scale(1.0));
        probe.validate().map_err(|e| invalid("solver", e.to_string()))?;
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml(&text)
}
