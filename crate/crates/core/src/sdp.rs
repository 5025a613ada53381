//! Dense LMI solver and the branch SDP builders.
//!
//! Problems are `max bᵀx  s.t.  A0 + Σ xᵢAᵢ ⪰ 0` over a list of blocks.
//! The solver is an infeasible-start primal–dual path-following method
//! (HKM direction, Mehrotra predictor–corrector) on the pair
//! `min ⟨A0,X⟩ s.t. ⟨Aᵢ,X⟩ = −bᵢ, X ⪰ 0`.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::stationary_stress;
use crate::fem::AssembledSystem;
use crate::linalg::{eig_sym, SymMatrix};
use crate::model::SolverSettings;

/// Lower-triangle (i ≥ j) coefficient lists.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub dim: usize,
    pub a0: Vec<(usize, usize, f64)>,
    pub coeffs: Vec<Vec<(usize, usize, f64)>>,
}

impl LmiBlock {
    pub fn new(dim: usize, p: usize) -> Self {
        LmiBlock {
            dim,
            a0: Vec::new(),
            coeffs: vec![Vec::new(); p],
        }
    }

    fn lower(i: usize, j: usize) -> (usize, usize) {
        if i >= j {
            (i, j)
        } else {
            (j, i)
        }
    }

    /// Adds `v` to the constant term at (i, j) and its mirror.
    pub fn add_const(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            let (i, j) = Self::lower(i, j);
            self.a0.push((i, j, v));
        }
    }

    pub fn add_coeff(&mut self, var: usize, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            let (i, j) = Self::lower(i, j);
            self.coeffs[var].push((i, j, v));
        }
    }

    fn dense(dim: usize, trip: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(dim, dim);
        for &(i, j, v) in trip {
            a[(i, j)] += v;
            if i != j {
                a[(j, i)] += v;
            }
        }
        a
    }

    pub fn const_matrix(&self) -> SymMatrix {
        SymMatrix::from_dmatrix(Self::dense(self.dim, &self.a0)).expect("finite block")
    }

    pub fn coeff_matrix(&self, var: usize) -> SymMatrix {
        SymMatrix::from_dmatrix(Self::dense(self.dim, &self.coeffs[var])).expect("finite block")
    }

    /// A0 + Σ xᵢAᵢ
    pub fn eval(&self, x: &DVector<f64>) -> SymMatrix {
        let mut a = Self::dense(self.dim, &self.a0);
        for (var, trip) in self.coeffs.iter().enumerate() {
            let s = x[var];
            for &(i, j, v) in trip {
                a[(i, j)] += s * v;
                if i != j {
                    a[(j, i)] += s * v;
                }
            }
        }
        SymMatrix::from_dmatrix(a).expect("finite block")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub p: usize,
    pub objective: DVector<f64>,
    pub sense: Sense,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LmiStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    pub status: LmiStatus,
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub min_block_eigs: Vec<f64>,
    pub iterations: usize,
    /// Achieved max(primal infeasibility, dual infeasibility, relative gap)
    /// in the solver's scaled units.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl From<&SolverSettings> for LmiSettings {
    fn from(s: &SolverSettings) -> Self {
        LmiSettings {
            tol: s.sdp_tol,
            max_iter: s.sdp_max_iter,
        }
    }
}

impl Default for LmiSettings {
    fn default() -> Self {
        LmiSettings {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl LmiProblem {
    pub fn new(p: usize, objective: DVector<f64>, sense: Sense) -> Self {
        assert_eq!(objective.len(), p, "objective length must equal variable count");
        LmiProblem {
            p,
            objective,
            sense,
            blocks: Vec::new(),
        }
    }

    pub fn add_block(&mut self, block: LmiBlock) {
        assert_eq!(block.coeffs.len(), self.p, "block variable count mismatch");
        self.blocks.push(block);
    }

    pub fn eval_blocks(&self, x: &DVector<f64>) -> Vec<SymMatrix> {
        self.blocks.iter().map(|b| b.eval(x)).collect()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }

    /// SDPA sparse format: `min cᵀx s.t. Σ xᵢFᵢ − F0 ⪰ 0`.
    pub fn to_sdpa(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\"LMI problem, {} variables\"", self.p);
        let _ = writeln!(out, "{}", self.p);
        let _ = writeln!(out, "{}", self.blocks.len());
        let dims: Vec<String> = self.blocks.iter().map(|b| b.dim.to_string()).collect();
        let _ = writeln!(out, "{}", dims.join(" "));
        let sign = match self.sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };
        let c: Vec<String> = self.objective.iter().map(|v| format!("{:.17e}", sign * v)).collect();
        let _ = writeln!(out, "{}", c.join(" "));
        for (bk, block) in self.blocks.iter().enumerate() {
            let f0 = block.const_matrix();
            for i in 0..block.dim {
                for j in i..block.dim {
                    if f0[(i, j)] != 0.0 {
                        let _ = writeln!(out, "0 {} {} {} {:.17e}", bk + 1, i + 1, j + 1, -f0[(i, j)]);
                    }
                }
            }
        }
        for var in 0..self.p {
            for (bk, block) in self.blocks.iter().enumerate() {
                let f = block.coeff_matrix(var);
                for i in 0..block.dim {
                    for j in i..block.dim {
                        if f[(i, j)] != 0.0 {
                            let _ = writeln!(out, "{} {} {} {} {:.17e}", var + 1, bk + 1, i + 1, j + 1, f[(i, j)]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Full (both triangles) triplets of one coefficient in one block.
type Full = Vec<(usize, usize, f64)>;

struct Scaled {
    dims: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    /// a[var][block]
    a: Vec<Vec<Full>>,
    b: DVector<f64>,
}

fn to_full(trip: &[(usize, usize, f64)], d: &[f64], s: f64) -> Full {
    let mut out = Vec::with_capacity(2 * trip.len());
    for &(i, j, v) in trip {
        let v = v * d[i] * d[j] * s;
        out.push((i, j, v));
        if i != j {
            out.push((j, i, v));
        }
    }
    out
}

/// Returns the scaled problem and the map x = xscale ⊙ y.
fn scale_problem(prob: &LmiProblem) -> (Scaled, DVector<f64>) {
    let p = prob.p;
    let mut dscale = Vec::with_capacity(prob.blocks.len());
    for blk in &prob.blocks {
        let mut diag = vec![0.0f64; blk.dim];
        let mut row = vec![0.0f64; blk.dim];
        let lists = std::iter::once(&blk.a0).chain(blk.coeffs.iter());
        for trip in lists {
            for &(i, j, v) in trip {
                if i == j {
                    diag[i] = diag[i].max(v.abs());
                }
                row[i] = row[i].max(v.abs());
                row[j] = row[j].max(v.abs());
            }
        }
        let d: Vec<f64> = (0..blk.dim)
            .map(|k| {
                let s = if diag[k] > 0.0 { diag[k] } else { row[k] };
                if s > 0.0 {
                    1.0 / s.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        dscale.push(d);
    }
    let mut vscale = DVector::from_element(p, 1.0);
    for var in 0..p {
        let mut mx = 0.0f64;
        for (blk, d) in prob.blocks.iter().zip(&dscale) {
            for &(i, j, v) in &blk.coeffs[var] {
                mx = mx.max((v * d[i] * d[j]).abs());
            }
        }
        if mx > 0.0 {
            vscale[var] = 1.0 / mx;
        }
    }
    let mut c = Vec::with_capacity(prob.blocks.len());
    for (blk, d) in prob.blocks.iter().zip(&dscale) {
        let mut m = DMatrix::zeros(blk.dim, blk.dim);
        for (i, j, v) in to_full(&blk.a0, d, 1.0) {
            m[(i, j)] += v;
        }
        c.push(m);
    }
    let norm_c = c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt().max(1.0);
    for m in &mut c {
        *m /= norm_c;
    }
    let sign = match prob.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut b = DVector::from_fn(p, |i, _| sign * prob.objective[i] * vscale[i]);
    let norm_b = b.amax().max(1e-300);
    b /= norm_b;
    let a = (0..p)
        .map(|var| {
            prob.blocks
                .iter()
                .zip(&dscale)
                .map(|(blk, d)| to_full(&blk.coeffs[var], d, vscale[var]))
                .collect()
        })
        .collect();
    let dims = prob.blocks.iter().map(|b| b.dim).collect();
    // x = vscale ⊙ (norm_c · y)
    (Scaled { dims, c, a, b }, vscale * norm_c)
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Converged,
    MaxIter,
    Stalled,
    DualUnbounded,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// ⟨A, R⟩ for sparse symmetric A and dense R.
fn sparse_dot(a: &Full, r: &DMatrix<f64>) -> f64 {
    a.iter().map(|&(i, j, v)| v * r[(j, i)]).sum()
}

/// Largest α ≤ 1 with M + αD ⪰ 0 for M ≻ 0, from the spectrum of L⁻¹DL⁻ᵀ.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<f64> {
    let l = Cholesky::new(m.clone())?.l();
    let t = l.solve_lower_triangular(d)?;
    let s = l.solve_lower_triangular(&t.transpose())?;
    let s = (&s + s.transpose()) * 0.5;
    let lmin = s.symmetric_eigenvalues().min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

struct IpmResult {
    y: DVector<f64>,
    outcome: Outcome,
    iters: usize,
    /// max(primal infeasibility, dual infeasibility, relative gap) at `y`.
    accuracy: f64,
}

fn ipm(sc: &Scaled, tol: f64, max_iter: usize) -> IpmResult {
    let (it, outcome, iters, best) = ipm_run(sc, tol, max_iter);
    match best {
        Some((accuracy, y)) if outcome != Outcome::Converged => IpmResult {
            y,
            outcome,
            iters,
            accuracy,
        },
        Some((accuracy, _)) => IpmResult {
            y: it.y,
            outcome,
            iters,
            accuracy,
        },
        None => IpmResult {
            y: it.y,
            outcome,
            iters,
            accuracy: f64::INFINITY,
        },
    }
}

#[allow(clippy::type_complexity)]
fn ipm_run(sc: &Scaled, tol: f64, max_iter: usize) -> (Iterate, Outcome, usize, Option<(f64, DVector<f64>)>) {
    let p = sc.b.len();
    let nblk = sc.dims.len();
    let ntot: usize = sc.dims.iter().sum();
    let a_norm = |var: usize| -> f64 {
        sc.a[var]
            .iter()
            .map(|t| t.iter().map(|e| e.2 * e.2).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    let c_norm = sc.c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let b_norm = sc.b.norm();
    let nf = ntot as f64;
    let mut xi = 10f64.max(nf.sqrt());
    let mut eta = 10f64.max(nf.sqrt()).max(c_norm);
    for var in 0..p {
        let an = a_norm(var);
        xi = xi.max(nf * (1.0 + sc.b[var].abs()) / (1.0 + an));
        eta = eta.max(an);
    }
    let mut it = Iterate {
        x: sc.dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect(),
        y: DVector::zeros(p),
        z: sc.dims.iter().map(|&d| DMatrix::identity(d, d) * eta).collect(),
    };
    let x0_norm = xi * nf.sqrt();

    let mut outcome = Outcome::MaxIter;
    let mut iters = 0;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut history: Vec<f64> = Vec::new();
    for k in 0..max_iter {
        iters = k;
        // Residuals.
        let mut rp = DVector::zeros(p);
        for var in 0..p {
            let mut s = -sc.b[var];
            for bk in 0..nblk {
                s -= sparse_dot(&sc.a[var][bk], &it.x[bk]);
            }
            rp[var] = s;
        }
        let mut rd: Vec<DMatrix<f64>> = sc.c.iter().zip(&it.z).map(|(c, z)| c - z).collect();
        for var in 0..p {
            let yv = it.y[var];
            if yv != 0.0 {
                for bk in 0..nblk {
                    for &(i, j, v) in &sc.a[var][bk] {
                        rd[bk][(i, j)] += yv * v;
                    }
                }
            }
        }
        let gap: f64 = (0..nblk).map(|bk| inner(&it.x[bk], &it.z[bk])).sum();
        let pobj: f64 = (0..nblk).map(|bk| inner(&sc.c[bk], &it.x[bk])).sum();
        let dobj = sc.b.dot(&it.y);
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = rd.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / (1.0 + c_norm);
        let relgap = gap.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        let metric = pinf.max(dinf).max(relgap);
        if best.as_ref().is_none_or(|b| metric < b.0) {
            best = Some((metric, it.y.clone()));
        }
        if pinf <= tol && dinf <= tol && relgap <= tol {
            outcome = Outcome::Converged;
            break;
        }
        history.push(metric);
        // Stop once progress has stalled at the precision floor.
        let n_hist = history.len();
        if n_hist > 8 && metric < 1e-6 && metric > 0.5 * history[n_hist - 4] {
            outcome = Outcome::Stalled;
            break;
        }
        let xnorm = it.x.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        if pobj < 0.0 && xnorm > 1e10 * x0_norm && pinf * (1.0 + b_norm) < 1e-8 * xnorm {
            outcome = Outcome::DualUnbounded;
            break;
        }
        let mu = gap / nf;

        // Factor Z and form Z⁻¹.
        let mut zinv = Vec::with_capacity(nblk);
        for z in &it.z {
            match Cholesky::new(z.clone()) {
                Some(ch) => {
                    let inv = ch.inverse();
                    zinv.push((&inv + inv.transpose()) * 0.5);
                }
                None => {
                    return (it, Outcome::Stalled, iters, best);
                }
            }
        }
        // Schur complement M_ij = tr(AᵢXAⱼZ⁻¹).
        let mut mm = DMatrix::<f64>::zeros(p, p);
        for bk in 0..nblk {
            let (x, zi) = (&it.x[bk], &zinv[bk]);
            for i in 0..p {
                let ai = &sc.a[i][bk];
                if ai.is_empty() {
                    continue;
                }
                for j in 0..=i {
                    let aj = &sc.a[j][bk];
                    if aj.is_empty() {
                        continue;
                    }
                    let mut s = 0.0;
                    for &(a, b, u) in ai {
                        let mut t = 0.0;
                        for &(c, d, v) in aj {
                            t += v * x[(b, c)] * zi[(d, a)];
                        }
                        s += u * t;
                    }
                    mm[(i, j)] += s;
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                mm[(j, i)] = mm[(i, j)];
            }
        }
        let dg: Vec<f64> = (0..p).map(|i| mm[(i, i)].abs().max(1e-300).sqrt().recip()).collect();
        let mut ms = mm.clone();
        for i in 0..p {
            for j in 0..p {
                ms[(i, j)] *= dg[i] * dg[j];
            }
        }
        let chol = match Cholesky::new(ms.clone()) {
            Some(c) => c,
            None => {
                let mut reg = ms.clone();
                for i in 0..p {
                    reg[(i, i)] += 1e-14;
                }
                match Cholesky::new(reg) {
                    Some(c) => c,
                    None => return (it, Outcome::Stalled, iters, best),
                }
            }
        };
        let solve_dir = |sigma_mu: f64, corr: Option<&Vec<DMatrix<f64>>>| {
            // R = σμZ⁻¹ − X − X·Rd·Z⁻¹ − corr
            let mut r = Vec::with_capacity(nblk);
            for bk in 0..nblk {
                let mut m = &zinv[bk] * sigma_mu - &it.x[bk] - &it.x[bk] * &rd[bk] * &zinv[bk];
                if let Some(c) = corr {
                    m -= &c[bk];
                }
                r.push(m);
            }
            let mut rhs = DVector::zeros(p);
            for var in 0..p {
                let mut s = -rp[var];
                for bk in 0..nblk {
                    s += sparse_dot(&sc.a[var][bk], &r[bk]);
                }
                rhs[var] = s * dg[var];
            }
            let mut dy = chol.solve(&rhs);
            for var in 0..p {
                dy[var] *= dg[var];
            }
            let build = |dy: &DVector<f64>| {
                let mut dz = rd.clone();
                for var in 0..p {
                    let v0 = dy[var];
                    for bk in 0..nblk {
                        for &(i, j, v) in &sc.a[var][bk] {
                            dz[bk][(i, j)] += v0 * v;
                        }
                    }
                }
                let mut dx = Vec::with_capacity(nblk);
                for bk in 0..nblk {
                    let mut m = &r[bk] + &it.x[bk] * &rd[bk] * &zinv[bk] - &it.x[bk] * &dz[bk] * &zinv[bk];
                    m = (&m + m.transpose()) * 0.5;
                    dx.push(m);
                }
                (dx, dz)
            };
            let (mut dx, mut dz) = build(&dy);
            // One step of iterative refinement on ⟨Aᵢ, ΔX⟩ = rpᵢ.
            let mut err = DVector::zeros(p);
            for var in 0..p {
                let mut s = rp[var];
                for bk in 0..nblk {
                    s -= sparse_dot(&sc.a[var][bk], &dx[bk]);
                }
                err[var] = -s * dg[var];
            }
            let mut delta = chol.solve(&err);
            for var in 0..p {
                delta[var] *= dg[var];
            }
            if delta.iter().all(|v| v.is_finite()) {
                dy += delta;
                let (dx2, dz2) = build(&dy);
                dx = dx2;
                dz = dz2;
            }
            (dx, dy, dz)
        };
        let steps = |dx: &Vec<DMatrix<f64>>, dz: &Vec<DMatrix<f64>>| -> Option<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for bk in 0..nblk {
                ap = ap.min(max_step(&it.x[bk], &dx[bk])?);
                ad = ad.min(max_step(&it.z[bk], &dz[bk])?);
            }
            Some((ap, ad))
        };

        // Predictor.
        let (dxa, _dya, dza) = solve_dir(0.0, None);
        let Some((apa, ada)) = steps(&dxa, &dza) else {
            return (it, Outcome::Stalled, iters, best);
        };
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mut gap_aff = 0.0;
        for bk in 0..nblk {
            let xa = &it.x[bk] + &dxa[bk] * apa;
            let za = &it.z[bk] + &dza[bk] * ada;
            gap_aff += inner(&xa, &za);
        }
        let ratio = (gap_aff / gap).clamp(0.0, 1.0);
        let expon = if mu > 1e-6 { 1.0f64.max(3.0 * apa.min(ada).powi(2)) } else { 3.0 };
        let sigma = ratio.powf(expon).clamp(0.0, 1.0);
        let corr: Vec<DMatrix<f64>> = (0..nblk).map(|bk| &dxa[bk] * &dza[bk] * &zinv[bk]).collect();
        let (dx, dy, dz) = solve_dir(sigma * mu, Some(&corr));
        let Some((ap, ad)) = steps(&dx, &dz) else {
            return (it, Outcome::Stalled, iters, best);
        };
        let gamma = 0.9 + 0.09 * apa.min(ada);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            outcome = Outcome::Stalled;
            break;
        }
        for bk in 0..nblk {
            it.x[bk] += &dx[bk] * ap;
            it.x[bk] = (&it.x[bk] + it.x[bk].transpose()) * 0.5;
            it.z[bk] += &dz[bk] * ad;
            it.z[bk] = (&it.z[bk] + it.z[bk].transpose()) * 0.5;
        }
        it.y += &dy * ad;
        iters = k + 1;
    }
    (it, outcome, iters, best)
}

fn min_eigs(prob: &LmiProblem, x: &DVector<f64>) -> Vec<f64> {
    prob.eval_blocks(x)
        .into_iter()
        .map(|m| {
            if m.n() == 0 {
                f64::INFINITY
            } else {
                m.into_matrix().symmetric_eigenvalues().min()
            }
        })
        .collect()
}

fn objective_value(prob: &LmiProblem, x: &DVector<f64>) -> f64 {
    prob.objective.dot(x)
}

fn phase_one(prob: &LmiProblem, settings: &LmiSettings) -> Option<f64> {
    let p = prob.p + 1;
    let mut obj = DVector::zeros(p);
    obj[prob.p] = 1.0;
    let mut ph = LmiProblem::new(p, obj, Sense::Maximize);
    for blk in &prob.blocks {
        let mut nb = LmiBlock::new(blk.dim, p);
        nb.a0 = blk.a0.clone();
        for var in 0..prob.p {
            nb.coeffs[var] = blk.coeffs[var].clone();
        }
        for i in 0..blk.dim {
            nb.add_coeff(prob.p, i, i, -1.0);
        }
        ph.add_block(nb);
    }
    let mut cap = LmiBlock::new(1, p);
    cap.add_const(0, 0, 1.0);
    cap.add_coeff(prob.p, 0, 0, -1.0);
    ph.add_block(cap);
    let (sc, xs) = scale_problem(&ph);
    let res = ipm(&sc, settings.tol.max(1e-9), settings.max_iter);
    match res.outcome {
        Outcome::DualUnbounded => None,
        _ => {
            let x = res.y.component_mul(&xs);
            Some(x[prob.p])
        }
    }
}

pub fn solve_lmi(prob: &LmiProblem, settings: &LmiSettings) -> LmiSolution {
    for blk in &prob.blocks {
        let ok = blk.a0.iter().chain(blk.coeffs.iter().flatten()).all(|&(i, j, v)| {
            i < blk.dim && j < blk.dim && v.is_finite()
        });
        if !ok {
            return LmiSolution {
                status: LmiStatus::NumericalFailure,
                x: DVector::zeros(prob.p),
                objective_value: f64::NAN,
                min_block_eigs: vec![],
                iterations: 0,
                accuracy: f64::INFINITY,
            };
        }
    }
    let (sc, xs) = scale_problem(prob);
    let res = ipm(&sc, settings.tol, settings.max_iter);
    let x = res.y.component_mul(&xs);
    let min_block_eigs = min_eigs(prob, &x);
    let mut status = match res.outcome {
        Outcome::Converged => LmiStatus::Optimal,
        Outcome::MaxIter => LmiStatus::IterationLimit,
        Outcome::Stalled => LmiStatus::NumericalFailure,
        Outcome::DualUnbounded => LmiStatus::Infeasible,
    };
    let feasible = prob.blocks.iter().zip(&min_block_eigs).all(|(b, &e)| {
        let scale = 1.0 + b.a0.iter().map(|t| t.2.abs()).fold(0.0, f64::max);
        e >= -1e2 * settings.tol * scale
    });
    if status != LmiStatus::Optimal && !feasible {
        // Decide strict infeasibility by maximizing the smallest eigenvalue.
        if let Some(s) = phase_one(prob, settings) {
            if s <= settings.tol {
                status = LmiStatus::Infeasible;
            } else if status == LmiStatus::Infeasible {
                status = LmiStatus::NumericalFailure;
            }
        }
    } else if status == LmiStatus::Infeasible {
        status = LmiStatus::NumericalFailure;
    }
    LmiSolution {
        status,
        objective_value: objective_value(prob, &x),
        min_block_eigs,
        x,
        iterations: res.iters,
        accuracy: res.accuracy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchKind {
    GlobalMin,
    LocalMax,
    LocalMin,
}

impl BranchKind {
    pub fn name(&self) -> &'static str {
        match self {
            BranchKind::GlobalMin => "global",
            BranchKind::LocalMax => "localmax",
            BranchKind::LocalMin => "localmin",
        }
    }
}

/// Negative eigenspace of G(σ̂(w)), eigenvalues below −eps.
pub fn unstable_subspace(w: &DVector<f64>, sys: &AssembledSystem, eps: f64) -> crate::Result<DMatrix<f64>> {
    let g = sys.g(&stationary_stress(w, sys));
    let (vals, vecs) = eig_sym(&g)?;
    let k = vals.iter().filter(|&&v| v < -eps).count();
    Ok(vecs.columns(0, k).clone_owned())
}

/// Branch SDP with w frozen at `w_frozen`.
///
/// GlobalMin and LocalMin: variables (σ, t, s), maximize t subject to
/// `[[G(σ)+ρI, f+ρw],[·, 2s]] ⪰ 0` and
/// `[[2K⁻¹, σ],[σᵀ, −t − s − λᵀσ − c + ½ρ‖w‖²]] ⪰ 0`;
/// the solution maximizes the dual of min Π_p(v) + ½ρ‖v − w‖².
///
/// LocalMax: variables (σ, t), maximize t subject to
/// `−PᵀG(σ)P − εI ⪰ 0` on the unstable subspace P of G(σ̂(w)) and
/// `[[2K⁻¹, σ],[σᵀ, φ(σ;w) − t]] ⪰ 0` with φ = ½wᵀG(σ)w − λᵀσ − fᵀw − c.
pub fn build_branch_sdp(
    kind: BranchKind,
    w_frozen: &DVector<f64>,
    sys: &AssembledSystem,
    settings: &SolverSettings,
    rho: f64,
) -> crate::Result<LmiProblem> {
    let ns = sys.n_sigma();
    let n = sys.n_red;
    let kinv2 = sys.k_inv.scaled(2.0);
    match kind {
        BranchKind::GlobalMin | BranchKind::LocalMin => {
            let p = ns + 2;
            let (t_var, s_var) = (ns, ns + 1);
            let mut obj = DVector::zeros(p);
            obj[t_var] = 1.0;
            let mut prob = LmiProblem::new(p, obj, Sense::Maximize);

            let mut b1 = LmiBlock::new(n + 1, p);
            let r = &sys.f_vec + w_frozen * rho;
            for j in 0..n {
                for i in j..n {
                    let v = sys.g0[(i, j)] + if i == j { rho } else { 0.0 };
                    b1.add_const(i, j, v);
                }
                b1.add_const(n, j, r[j]);
            }
            for (var, nz) in sys.hsens_nz.iter().enumerate() {
                for &(i, j, v) in nz {
                    b1.add_coeff(var, i, j, v);
                }
            }
            b1.add_coeff(s_var, n, n, 2.0);
            prob.add_block(b1);

            let mut b2 = LmiBlock::new(ns + 1, p);
            for j in 0..ns {
                for i in j..ns {
                    b2.add_const(i, j, kinv2[(i, j)]);
                }
                b2.add_coeff(j, ns, j, 1.0);
                b2.add_coeff(j, ns, ns, -sys.lam_vec[j]);
            }
            b2.add_const(ns, ns, -sys.c + 0.5 * rho * w_frozen.norm_squared());
            b2.add_coeff(t_var, ns, ns, -1.0);
            b2.add_coeff(s_var, ns, ns, -1.0);
            prob.add_block(b2);
            Ok(prob)
        }
        BranchKind::LocalMax => {
            let p = ns + 1;
            let t_var = ns;
            let mut obj = DVector::zeros(p);
            obj[t_var] = 1.0;
            let mut prob = LmiProblem::new(p, obj, Sense::Maximize);

            let pm = unstable_subspace(w_frozen, sys, settings.strictness_eps)?;
            let k = pm.ncols();
            let mut b1 = LmiBlock::new(k.max(1), p);
            if k == 0 {
                // No unstable direction: −εI ⪰ 0 is infeasible by construction.
                b1.add_const(0, 0, -settings.strictness_eps);
            } else {
                let g0p = sys.g0.congruence(&pm);
                for j in 0..k {
                    for i in j..k {
                        let e = if i == j { settings.strictness_eps } else { 0.0 };
                        b1.add_const(i, j, -g0p[(i, j)] - e);
                    }
                }
                for (var, h) in sys.hsens.iter().enumerate() {
                    let hp = h.congruence(&pm);
                    for j in 0..k {
                        for i in j..k {
                            b1.add_coeff(var, i, j, -hp[(i, j)]);
                        }
                    }
                }
            }
            prob.add_block(b1);

            let mut b2 = LmiBlock::new(ns + 1, p);
            let a = sys.a_vec(w_frozen);
            for j in 0..ns {
                for i in j..ns {
                    b2.add_const(i, j, kinv2[(i, j)]);
                }
                b2.add_coeff(j, ns, j, 1.0);
                b2.add_coeff(j, ns, ns, a[j] - sys.lam_vec[j]);
            }
            let phi0 = 0.5 * sys.g0.quad(w_frozen) - sys.f_vec.dot(w_frozen) - sys.c;
            b2.add_const(ns, ns, phi0);
            b2.add_coeff(t_var, ns, ns, -1.0);
            prob.add_block(b2);
            Ok(prob)
        }
    }
}
