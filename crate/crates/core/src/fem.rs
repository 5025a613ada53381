//! Hermite/linear mixed elements, closed-form element matrices and assembly.

use nalgebra::{DMatrix, DVector};

use crate::linalg::SymMatrix;
use crate::model::{BeamProperties, Lateral, LoadCase, Mesh, SupportSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementStress {
    pub sig_left: f64,
    pub sig_right: f64,
}

impl ElementStress {
    pub fn new(sig_left: f64, sig_right: f64) -> Self {
        ElementStress {
            sig_left,
            sig_right,
        }
    }
}

/// Shape function values and x-derivatives at a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValues {
    pub nw: [f64; 4],
    pub dnw: [f64; 4],
    pub d2nw: [f64; 4],
    pub nsig: [f64; 2],
}

pub fn shape_functions(xi: f64, le: f64) -> ShapeValues {
    let (a, b) = (1.0 - xi, 1.0 + xi);
    let nw = [
        0.25 * a * a * (2.0 + xi),
        le / 8.0 * a * a * b,
        0.25 * b * b * (2.0 - xi),
        le / 8.0 * b * b * (xi - 1.0),
    ];
    let dxi = [
        -0.75 * a * b,
        le / 8.0 * a * (-1.0 - 3.0 * xi),
        0.75 * a * b,
        le / 8.0 * b * (3.0 * xi - 1.0),
    ];
    let d2xi = [
        1.5 * xi,
        le / 4.0 * (3.0 * xi - 1.0),
        -1.5 * xi,
        le / 4.0 * (3.0 * xi + 1.0),
    ];
    let j = 2.0 / le;
    ShapeValues {
        nw,
        dnw: dxi.map(|v| v * j),
        d2nw: d2xi.map(|v| v * j * j),
        nsig: [0.5 * a, 0.5 * b],
    }
}

fn hermite_bending(le: f64, ei: f64) -> [[f64; 4]; 4] {
    let k = ei / (le * le * le);
    let (l, l2) = (le, le * le);
    [
        [12.0 * k, 6.0 * l * k, -12.0 * k, 6.0 * l * k],
        [6.0 * l * k, 4.0 * l2 * k, -6.0 * l * k, 2.0 * l2 * k],
        [-12.0 * k, -6.0 * l * k, 12.0 * k, -6.0 * l * k],
        [6.0 * l * k, 2.0 * l2 * k, -6.0 * l * k, 4.0 * l2 * k],
    ]
}

/// ∫σ Nw′Nw′ᵀ dx for linear σ; the geometric part of G^e.
fn geometric(es: ElementStress, le: f64) -> [[f64; 4]; 4] {
    let (s1, s2) = (es.sig_left, es.sig_right);
    let g11 = 3.0 * (s1 + s2) / (5.0 * le);
    let g12 = s2 / 10.0;
    let g14 = s1 / 10.0;
    let g22 = le * (s1 / 10.0 + s2 / 30.0);
    let g24 = -le / 60.0 * (s1 + s2);
    let g44 = le * (s1 / 30.0 + s2 / 10.0);
    [
        [g11, g12, -g11, g14],
        [g12, g22, -g12, g24],
        [-g11, -g12, g11, -g14],
        [g14, g24, -g14, g44],
    ]
}

fn to_sym(a: [[f64; 4]; 4]) -> SymMatrix {
    SymMatrix::from_lower_fn(4, |i, j| a[i][j])
}

pub fn element_gap_matrix(es: ElementStress, le: f64, ei: f64) -> SymMatrix {
    let kb = hermite_bending(le, ei);
    let kg = geometric(es, le);
    SymMatrix::from_lower_fn(4, |i, j| kb[i][j] + kg[i][j])
}

/// M^e, half the geometric part of G^e.
pub fn element_geometric_matrix(es: ElementStress, le: f64) -> SymMatrix {
    to_sym(geometric(es, le)).scaled(0.5)
}

/// (K_e, λ_e, c_e) of the complementary energy.
pub fn element_static_parts(props: &BeamProperties, lambda: f64, le: f64) -> (SymMatrix, [f64; 2], f64) {
    let k = le / (props.e * props.alpha);
    let ke = SymMatrix::from_lower_fn(2, |i, j| if i == j { 0.5 * k } else { 0.25 * k });
    let l = 0.75 * lambda * le / props.alpha;
    let c = 3.0 * props.e * le * lambda * lambda / (4.0 * props.alpha);
    (ke, [l, l], c)
}

/// Consistent element load vector; a center point load contributes nothing
/// here and is added at its node during assembly.
pub fn element_load(lateral: Lateral, le: f64) -> [f64; 4] {
    match lateral {
        Lateral::Uniform(q) => [q * le / 2.0, q * le * le / 12.0, q * le / 2.0, -q * le * le / 12.0],
        Lateral::CenterPoint(_) => [0.0; 4],
    }
}

/// Lower-triangle entries (i ≥ j) of a sparse symmetric matrix.
pub type Triplets = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub props: BeamProperties,
    pub mesh: Mesh,
    pub load: LoadCase,
    pub support: SupportSpec,
    pub n_full: usize,
    pub n_red: usize,
    pub g0: SymMatrix,
    /// ∂G/∂σᵢ, one per node.
    pub hsens: Vec<SymMatrix>,
    pub hsens_nz: Vec<Triplets>,
    pub k: SymMatrix,
    pub k_inv: SymMatrix,
    pub lam_vec: DVector<f64>,
    pub f_vec: DVector<f64>,
    pub c: f64,
    /// Full indices of the kept DOFs, ascending.
    pub free: Vec<usize>,
    full_to_red: Vec<Option<usize>>,
}

fn element_dofs(e: usize) -> [usize; 4] {
    [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]
}

pub fn assemble(
    props: &BeamProperties,
    load: &LoadCase,
    support: &SupportSpec,
    mesh: &Mesh,
) -> Result<AssembledSystem> {
    load.check_mesh(mesh)?;
    let m = mesh.m;
    let n_full = 2 * (m + 1);
    let fixed = support.fixed_dofs(m);
    if let Some(&bad) = fixed.iter().find(|&&d| d >= n_full) {
        return Err(Error::Domain(format!("fixed DOF {bad} out of range (n={n_full})")));
    }
    let mut full_to_red = vec![None; n_full];
    let mut free = Vec::with_capacity(n_full);
    for d in 0..n_full {
        if fixed.binary_search(&d).is_err() {
            full_to_red[d] = Some(free.len());
            free.push(d);
        }
    }
    let n_red = free.len();
    if n_red == 0 {
        return Err(Error::Domain("every DOF is fixed".into()));
    }

    let ei = props.ei();
    let mut g0 = SymMatrix::zeros(n_full);
    let mut h_full: Vec<Triplets> = vec![Vec::new(); m + 1];
    let mut k = SymMatrix::zeros(m + 1);
    let mut lam_vec = DVector::zeros(m + 1);
    let mut f_full = DVector::zeros(n_full);
    let mut c = 0.0;
    for e in 0..m {
        let le = mesh.node_x[e + 1] - mesh.node_x[e];
        let dofs = element_dofs(e);
        let kb = hermite_bending(le, ei);
        let gl = geometric(ElementStress::new(1.0, 0.0), le);
        let gr = geometric(ElementStress::new(0.0, 1.0), le);
        for a in 0..4 {
            for b in 0..=a {
                g0.add_sym(dofs[a], dofs[b], kb[a][b]);
                h_full[e].push((dofs[a], dofs[b], gl[a][b]));
                h_full[e + 1].push((dofs[a], dofs[b], gr[a][b]));
            }
        }
        let (ke, le_vec, ce) = element_static_parts(props, load.axial_lambda, le);
        for a in 0..2 {
            lam_vec[e + a] += le_vec[a];
            for b in 0..=a {
                k.add_sym(e + a, e + b, ke[(a, b)]);
            }
        }
        c += ce;
        let fe = element_load(load.lateral, le);
        for a in 0..4 {
            f_full[dofs[a]] += fe[a];
        }
    }
    if let Lateral::CenterPoint(p) = load.lateral {
        f_full[2 * (m / 2)] += p;
    }

    // Reduce: keep rows/columns of free DOFs, merging duplicate entries.
    let g0 = g0.select(&free);
    let mut hsens = Vec::with_capacity(m + 1);
    let mut hsens_nz = Vec::with_capacity(m + 1);
    for trip in &h_full {
        let mut h = SymMatrix::zeros(n_red);
        for &(i, j, v) in trip {
            if let (Some(r), Some(s)) = (full_to_red[i], full_to_red[j]) {
                h.add_sym(r, s, v);
            }
        }
        let mut nz = Triplets::new();
        for j in 0..n_red {
            for i in j..n_red {
                if h[(i, j)] != 0.0 {
                    nz.push((i, j, h[(i, j)]));
                }
            }
        }
        hsens.push(h);
        hsens_nz.push(nz);
    }
    let f_vec = DVector::from_fn(n_red, |r, _| f_full[free[r]]);
    let k_inv = invert_spd(&k)?;
    Ok(AssembledSystem {
        props: *props,
        mesh: mesh.clone(),
        load: *load,
        support: support.clone(),
        n_full,
        n_red,
        g0,
        hsens,
        hsens_nz,
        k,
        k_inv,
        lam_vec,
        f_vec,
        c,
        free,
        full_to_red,
    })
}

fn invert_spd(k: &SymMatrix) -> Result<SymMatrix> {
    let chol = nalgebra::Cholesky::new(k.as_matrix().clone()).ok_or(Error::NotPositiveDefinite)?;
    SymMatrix::from_dmatrix(chol.inverse())
}

impl AssembledSystem {
    pub fn n_sigma(&self) -> usize {
        self.mesh.m + 1
    }

    pub fn g0_max(&self) -> f64 {
        self.g0.max_abs()
    }

    /// G(σ) = G0 + 2M(σ). Equals G0 + Σ σᵢ Hᵢ up to roundoff; the SDP uses the Hᵢ form.
    pub fn g(&self, sigma: &DVector<f64>) -> SymMatrix {
        let mut g = self.m_matrix(sigma).scaled(2.0);
        g.axpy(1.0, &self.g0);
        g
    }

    /// M(σ) assembled element by element from M^e.
    pub fn m_matrix(&self, sigma: &DVector<f64>) -> SymMatrix {
        let mut mm = SymMatrix::zeros(self.n_full);
        for e in 0..self.mesh.m {
            let le = self.mesh.node_x[e + 1] - self.mesh.node_x[e];
            let me = element_geometric_matrix(ElementStress::new(sigma[e], sigma[e + 1]), le);
            let dofs = element_dofs(e);
            for a in 0..4 {
                for b in 0..=a {
                    mm.add_sym(dofs[a], dofs[b], me[(a, b)]);
                }
            }
        }
        mm.select(&self.free)
    }

    /// aᵢ(w) = ½ wᵀHᵢw
    pub fn a_vec(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n_sigma(),
            self.hsens_nz.iter().map(|nz| {
                let mut s = 0.0;
                for &(r, c, v) in nz {
                    let t = v * w[r] * w[c];
                    s += if r == c { 0.5 * t } else { t };
                }
                s
            }),
        )
    }

    /// Columns Hᵢw.
    pub fn b_matrix(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n_red, self.n_sigma());
        for (i, nz) in self.hsens_nz.iter().enumerate() {
            for &(r, c, v) in nz {
                b[(r, i)] += v * w[c];
                if r != c {
                    b[(c, i)] += v * w[r];
                }
            }
        }
        b
    }

    pub fn extract(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_red, |r, _| full[self.free[r]])
    }

    /// Full-length vector with zeros at fixed DOFs.
    pub fn inject(&self, red: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_full);
        for (r, &d) in self.free.iter().enumerate() {
            full[d] = red[r];
        }
        full
    }

    pub fn reduced_index(&self, full: usize) -> Option<usize> {
        self.full_to_red.get(full).copied().flatten()
    }
}
