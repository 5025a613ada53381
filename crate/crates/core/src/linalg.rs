//! Dense symmetric kernels: Bunch–Kaufman LDLᵀ, inertia, Jacobi eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Dense symmetric matrix. Every constructor and mutator keeps both
/// triangles equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Symmetrizes `(A + Aᵀ)/2`. Fails on non-square or non-finite input.
    pub fn from_dmatrix(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Domain(format!(
                "matrix is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        let s = (&a + a.transpose()) * 0.5;
        Ok(SymMatrix(s))
    }

    /// Builds from the lower triangle of `f(i, j)`, `i >= j`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        SymMatrix(a)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Adds `v` at `(i, j)` and its mirror.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] += v;
        if i != j {
            self.0[(j, i)] += v;
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    /// xᵀAx
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }

    /// self += a·other
    pub fn axpy(&mut self, a: f64, other: &SymMatrix) {
        self.0.zip_apply(&other.0, |s, o| *s += a * o);
    }

    pub fn scaled(&self, a: f64) -> SymMatrix {
        SymMatrix(&self.0 * a)
    }

    pub fn shifted(&self, s: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..m.n() {
            m.0[(i, i)] += s;
        }
        m
    }

    /// Principal submatrix on `idx`.
    pub fn select(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_lower_fn(idx.len(), |i, j| self.0[(idx[i], idx[j])])
    }

    /// Congruence PᵀAP.
    pub fn congruence(&self, p: &DMatrix<f64>) -> SymMatrix {
        let m = p.transpose() * &self.0 * p;
        SymMatrix((&m + m.transpose()) * 0.5)
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, ij: (usize, usize)) -> &f64 {
        &self.0[ij]
    }
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    /// [[a, b], [b, c]]
    Two(f64, f64, f64),
}

/// P A Pᵀ = L D Lᵀ with unit lower L and 1x1/2x2 blocks in D.
#[derive(Debug, Clone)]
pub struct Ldl {
    l: DMatrix<f64>,
    pivots: Vec<Pivot>,
    perm: Vec<usize>,
    a_max: f64,
}

fn two_by_two_eigs(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mid - rad, mid + rad)
}

fn swap_sym(w: &mut DMatrix<f64>, i: usize, j: usize) {
    w.swap_rows(i, j);
    w.swap_columns(i, j);
}

/// Bunch–Kaufman factorization with partial (diagonal or 2x2) pivoting.
/// Never fails; singular matrices yield zero pivots.
pub fn ldl_factor(a: &SymMatrix) -> Ldl {
    let n = a.n();
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let mut w = a.0.clone();
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut pivots = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        let akk = w[(k, k)].abs();
        let mut imax = k;
        let mut colmax = 0.0;
        for i in k + 1..n {
            let v = w[(i, k)].abs();
            if v > colmax {
                colmax = v;
                imax = i;
            }
        }
        let (kstep, kp) = if akk.max(colmax) == 0.0 || akk >= alpha * colmax {
            (1, k)
        } else {
            let mut rowmax = 0.0f64;
            for j in k..n {
                if j != imax {
                    rowmax = rowmax.max(w[(imax, j)].abs());
                }
            }
            if akk * rowmax >= alpha * colmax * colmax {
                (1, k)
            } else if w[(imax, imax)].abs() >= alpha * rowmax {
                (1, imax)
            } else {
                (2, imax)
            }
        };
        let kk = k + kstep - 1;
        if kp != kk {
            swap_sym(&mut w, kk, kp);
            for c in 0..k {
                l.swap((kk, c), (kp, c));
            }
            perm.swap(kk, kp);
        }
        if kstep == 1 {
            let d = w[(k, k)];
            pivots.push(Pivot::One(d));
            if d != 0.0 {
                for i in k + 1..n {
                    l[(i, k)] = w[(i, k)] / d;
                }
                for j in k + 1..n {
                    let wjk = w[(j, k)];
                    if wjk == 0.0 {
                        continue;
                    }
                    for i in j..n {
                        let v = w[(i, j)] - l[(i, k)] * wjk;
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
            }
            k += 1;
        } else {
            let (a11, a21, a22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
            let det = a11 * a22 - a21 * a21;
            for i in k + 2..n {
                let (p, q) = (w[(i, k)], w[(i, k + 1)]);
                l[(i, k)] = (p * a22 - q * a21) / det;
                l[(i, k + 1)] = (q * a11 - p * a21) / det;
            }
            for j in k + 2..n {
                let (wjk, wjk1) = (w[(j, k)], w[(j, k + 1)]);
                for i in j..n {
                    let v = w[(i, j)] - l[(i, k)] * wjk - l[(i, k + 1)] * wjk1;
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
            pivots.push(Pivot::Two(a11, a21, a22));
            k += 2;
        }
    }
    Ldl {
        l,
        pivots,
        perm,
        a_max: a.max_abs(),
    }
}

impl Ldl {
    /// Signs of D; equals the inertia of A by Sylvester's law.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let (mut p, mut q, mut z) = (0, 0, 0);
        let mut count = |v: f64| {
            if v > 0.0 {
                p += 1
            } else if v < 0.0 {
                q += 1
            } else {
                z += 1
            }
        };
        for piv in &self.pivots {
            match *piv {
                Pivot::One(d) => count(d),
                Pivot::Two(a, b, c) => {
                    let (e1, e2) = two_by_two_eigs(a, b, c);
                    count(e1);
                    count(e2);
                }
            }
        }
        (p, q, z)
    }

    /// Smallest pivot magnitude (eigenvalue magnitude for 2x2 blocks).
    pub fn min_pivot(&self) -> f64 {
        self.pivots
            .iter()
            .map(|piv| match *piv {
                Pivot::One(d) => d.abs(),
                Pivot::Two(a, b, c) => {
                    let (e1, e2) = two_by_two_eigs(a, b, c);
                    e1.abs().min(e2.abs())
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.perm.len();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let threshold = 1e-14 * self.a_max;
        let pivot = self.min_pivot();
        if n > 0 && !(pivot > threshold) {
            return Err(Error::Singular { pivot, threshold });
        }
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for i in j + 1..n {
                    y[i] -= self.l[(i, j)] * yj;
                }
            }
        }
        let mut k = 0;
        for piv in &self.pivots {
            match *piv {
                Pivot::One(d) => {
                    y[k] /= d;
                    k += 1;
                }
                Pivot::Two(a, bb, c) => {
                    let det = a * c - bb * bb;
                    let (p, q) = (y[k], y[k + 1]);
                    y[k] = (c * p - bb * q) / det;
                    y[k + 1] = (a * q - bb * p) / det;
                    k += 2;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in j + 1..n {
                s -= self.l[(i, j)] * y[i];
            }
            y[j] = s;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        Ok(x)
    }
}

pub fn solve_sym(a: &SymMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.n() != b.len() {
        return Err(Error::Domain(format!(
            "system is {}x{} but right-hand side has length {}",
            a.n(),
            a.n(),
            b.len()
        )));
    }
    ldl_factor(a).solve(b)
}

/// Eigenvalue sign counts with |λ| ≤ tol counted as zero, from two shifted
/// factorizations (λ > tol ⟺ positive eigenvalue of A − tol·I).
pub fn inertia(a: &SymMatrix, tol: f64) -> (usize, usize, usize) {
    let n = a.n();
    if tol == 0.0 {
        return ldl_factor(a).inertia();
    }
    let tol = tol.abs();
    let pos = ldl_factor(&a.shifted(-tol)).inertia().0;
    let neg = ldl_factor(&a.shifted(tol)).inertia().1;
    (pos, neg, n - pos - neg)
}

/// Cyclic Jacobi eigensolver. Eigenvalues ascending, eigenvectors as columns.
pub fn eig_sym(a: &SymMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    const MAX_SWEEPS: usize = 60;
    let n = a.n();
    let mut m = a.0.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[(p, p)], m[(q, q)]);
                if apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let vals = DVector::from_fn(n, |i, _| m[(order[i], order[i])]);
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((vals, vecs))
}

pub fn min_eig(a: &SymMatrix) -> Result<f64> {
    let (vals, _) = eig_sym(a)?;
    Ok(if vals.is_empty() { f64::INFINITY } else { vals[0] })
}

/// Lower Cholesky factor; fails unless A is positive definite.
pub fn cholesky(a: &SymMatrix) -> Result<DMatrix<f64>> {
    let n = a.n();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Smallest Λ with Av = ΛBv, via C = L⁻¹AL⁻ᵀ where B = LLᵀ.
pub fn gen_eig_sym_min(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    let (val, _) = gen_eig_sym_min_vec(a, b)?;
    Ok(val)
}

/// As [`gen_eig_sym_min`], also returning the B-normalized eigenvector.
pub fn gen_eig_sym_min_vec(a: &SymMatrix, b: &SymMatrix) -> Result<(f64, DVector<f64>)> {
    if a.n() != b.n() || a.n() == 0 {
        return Err(Error::Domain("generalized eigenproblem needs equal, nonzero sizes".into()));
    }
    let l = cholesky(b)?;
    let n = a.n();
    // X = L⁻¹A, then C = (L⁻¹Xᵀ)ᵀ... both by forward substitution.
    let x = l
        .solve_lower_triangular(a.as_matrix())
        .ok_or(Error::NotPositiveDefinite)?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NotPositiveDefinite)?;
    let c = SymMatrix::from_dmatrix(c)?;
    let (vals, vecs) = eig_sym(&c)?;
    let y = vecs.column(0).clone_owned();
    let v = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(Error::NotPositiveDefinite)?;
    debug_assert_eq!(v.len(), n);
    Ok((vals[0], v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        SymMatrix::from_lower_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn solve_small_cases() {
        let b = DVector::from_vec(vec![4.0, 6.0]);
        assert_eq!(solve_sym(&SymMatrix::identity(2), &b).unwrap(), b);
        let x = solve_sym(&SymMatrix::from_diagonal(&[2.0, -3.0]), &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn solve_needs_two_by_two_pivots() {
        // Zero diagonal forces 2x2 pivots.
        let a = SymMatrix::from_dmatrix(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0],
        ))
        .unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = solve_sym(&a, &b).unwrap();
        assert!((a.mul_vec(&x) - &b).norm() < 1e-14);
        assert_eq!(ldl_factor(&a).inertia(), (1, 2, 0));
    }

    #[test]
    fn singular_detected() {
        let a = SymMatrix::from_diagonal(&[1.0, 0.0, 2.0]);
        assert!(matches!(
            solve_sym(&a, &DVector::from_element(3, 1.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn inertia_examples() {
        assert_eq!(inertia(&SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]), 1e-12), (3, 0, 0));
        assert_eq!(inertia(&SymMatrix::from_diagonal(&[1.0, 0.0, -1.0]), 1e-12), (1, 1, 1));
        assert_eq!(inertia(&SymMatrix::from_diagonal(&[1e-13, -1e-13, 5.0]), 1e-12), (1, 0, 2));
    }

    #[test]
    fn inertia_from_known_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..12 {
            let q = orthogonal(&mut rng, n);
            let lam: Vec<f64> = (0..n)
                .map(|i| match i % 3 {
                    0 => rng.gen_range(0.5..2.0),
                    1 => -rng.gen_range(0.5..2.0),
                    _ => 1e-14,
                })
                .collect();
            let a = SymMatrix::from_dmatrix(
                &q * DMatrix::from_diagonal(&DVector::from_vec(lam.clone())) * q.transpose(),
            )
            .unwrap();
            let want = (
                lam.iter().filter(|&&l| l > 1e-10).count(),
                lam.iter().filter(|&&l| l < -1e-10).count(),
                lam.iter().filter(|&&l| l.abs() <= 1e-10).count(),
            );
            assert_eq!(inertia(&a, 1e-10), want);
        }
    }

    #[test]
    fn eig_examples() {
        let (v, _) = eig_sym(&SymMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0]);
        let a = SymMatrix::from_dmatrix(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let (v, _) = eig_sym(&a).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 17, 40] {
            let a = random_sym(&mut rng, n);
            let (vals, vecs) = eig_sym(&a).unwrap();
            let scale = a.max_abs();
            let back = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
            assert!((back - a.as_matrix()).amax() <= 1e-9 * scale);
            let gram = vecs.transpose() * &vecs - DMatrix::identity(n, n);
            assert!(gram.amax() <= 1e-10);
            for k in 0..n {
                let x = vecs.column(k).clone_owned();
                assert!((a.mul_vec(&x) - &x * vals[k]).norm() <= 1e-9 * scale);
            }
            for k in 1..n {
                assert!(vals[k - 1] <= vals[k]);
            }
        }
    }

    #[test]
    fn gen_eig_examples() {
        let b = SymMatrix::from_dmatrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        assert!((gen_eig_sym_min(&b.scaled(2.0), &b).unwrap() - 2.0).abs() < 1e-14);
        let a = SymMatrix::from_diagonal(&[4.0, 9.0]);
        assert!((gen_eig_sym_min(&a, &SymMatrix::identity(2)).unwrap() - 4.0).abs() < 1e-14);
        assert!(gen_eig_sym_min(&a, &SymMatrix::from_diagonal(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn gen_eig_matches_rayleigh_scan() {
        // Oracle: B^{-1/2} from B's own eigen decomposition, not Cholesky.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 4, 9] {
            let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let a = SymMatrix::from_dmatrix(&r * r.transpose()).unwrap();
            let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let b = SymMatrix::from_dmatrix(&s * s.transpose() + DMatrix::identity(n, n)).unwrap();
            let (bv, bq) = eig_sym(&b).unwrap();
            let bih = &bq * DMatrix::from_diagonal(&bv.map(|x| 1.0 / x.sqrt())) * bq.transpose();
            let c = SymMatrix::from_dmatrix(&bih * a.as_matrix() * &bih).unwrap();
            let want = min_eig(&c).unwrap();
            let (got, v) = gen_eig_sym_min_vec(&a, &b).unwrap();
            assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()));
            let rq = a.quad(&v) / b.quad(&v);
            assert!((rq - got).abs() < 1e-12 * (1.0 + got.abs()));
        }
    }
}
