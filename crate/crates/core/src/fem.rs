//! Fine-scale discrete-fracture FEM: Q1 elements on the square mesh with
//! fracture edges sharing the matrix degrees of freedom.

use serde::{Deserialize, Serialize};

use crate::error::{NlmcError, Result};
use crate::geometry::{CoarseGrid, ContinuumIndex, ContinuumKind, FineMesh, FractureNetwork};
use crate::linalg::{norm2, SparseOperator, SparseRow, SparseSpd};

/// Nodal values over a [`FineMesh`].
pub type FineField = Vec<f64>;

/// Q1 element stiffness on a square for unit coefficient (independent of `h` in 2D),
/// corners counter-clockwise from the lower left.
pub(crate) const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Q1 element mass on a unit square.
const Q1_MASS: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Assembles `a(u, v) = ∫ κ ∇u·∇v + Σ_f c_f ∫_f ∂_s u ∂_s v`.
///
/// `kappa` holds one matrix permeability per fine cell.
pub fn assemble_stiffness(mesh: &FineMesh, fractures: &FractureNetwork, kappa: &[f64]) -> Result<SparseOperator> {
    if kappa.len() != mesh.n_cells() {
        return Err(NlmcError::Dimension { expected: mesh.n_cells(), found: kappa.len() });
    }
    if let Some((c, &k)) = kappa.iter().enumerate().find(|(_, k)| !(**k > 0.0 && k.is_finite())) {
        return Err(NlmcError::NonPositiveCoefficient { what: "cell", id: c, value: k });
    }
    if let Some(f) = fractures.fractures.iter().find(|f| !(f.conductivity > 0.0 && f.conductivity.is_finite())) {
        return Err(NlmcError::NonPositiveCoefficient { what: "fracture", id: f.id, value: f.conductivity });
    }

    let mut entries = Vec::with_capacity(16 * mesh.n_cells());
    for (c, &k) in kappa.iter().enumerate() {
        let nodes = mesh.cell_nodes(c);
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                entries.push((na, nb, k * Q1_STIFFNESS[a][b]));
            }
        }
    }
    for e in fractures.edges(mesh) {
        let cf = fractures.fractures[e.fracture].conductivity / e.length;
        entries.push((e.a, e.a, cf));
        entries.push((e.b, e.b, cf));
        entries.push((e.a, e.b, -cf));
        entries.push((e.b, e.a, -cf));
    }
    SparseOperator::from_triplets(mesh.n_nodes(), &entries, true)
}

/// Optional fracture storage in the mass matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MassOptions {
    /// When set, adds `d ∫_f u v` along every fracture edge with this aperture `d`.
    pub fracture_aperture: Option<f64>,
}

/// Q1 consistent mass matrix over the 2D domain.
pub fn assemble_mass(mesh: &FineMesh, fractures: &FractureNetwork, options: MassOptions) -> SparseOperator {
    let h2 = mesh.h * mesh.h;
    let mut entries = Vec::with_capacity(16 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                entries.push((na, nb, h2 * Q1_MASS[a][b]));
            }
        }
    }
    if let Some(d) = options.fracture_aperture {
        for e in fractures.edges(mesh) {
            let m = d * e.length / 6.0;
            entries.push((e.a, e.a, 2.0 * m));
            entries.push((e.b, e.b, 2.0 * m));
            entries.push((e.a, e.b, m));
            entries.push((e.b, e.a, m));
        }
    }
    SparseOperator::from_triplets(mesh.n_nodes(), &entries, true).expect("mass assembly indices are in range")
}

/// Normalization of continuum degrees of freedom.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofScaling {
    /// Constraint functionals are plain integrals: `∫_{K_j} ψ = δ`.
    Integral,
    /// Constraint functionals are mean values: `|K_j|⁻¹ ∫_{K_j} ψ = δ`.
    #[default]
    Average,
}

/// Integral functionals over every continuum, in [`ContinuumIndex`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMatrix {
    rows: Vec<SparseRow>,
    measures: Vec<f64>,
    n_nodes: usize,
}

impl ConstraintMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn row(&self, k: usize) -> &SparseRow {
        &self.rows[k]
    }

    /// Block area for matrix rows, clipped arclength for fracture rows.
    pub fn measure(&self, k: usize) -> f64 {
        self.measures[k]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    /// Row `k` normalized according to `scaling`.
    pub fn scaled_row(&self, k: usize, scaling: DofScaling) -> SparseRow {
        match scaling {
            DofScaling::Integral => self.rows[k].clone(),
            DofScaling::Average => self.rows[k].scaled(1.0 / self.measures[k]),
        }
    }

    /// Integrals of `u` over every continuum.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(u)).collect()
    }

    /// Mean values of `u` over every continuum.
    pub fn mean_values(&self, u: &[f64]) -> Vec<f64> {
        self.rows.iter().zip(&self.measures).map(|(r, m)| r.dot(u) / m).collect()
    }

    pub fn apply_scaled(&self, u: &[f64], scaling: DofScaling) -> Vec<f64> {
        match scaling {
            DofScaling::Integral => self.apply(u),
            DofScaling::Average => self.mean_values(u),
        }
    }
}

/// Quadrature weights of `∫_{K_j} ·` (exact for Q1) and `∫_{f_m^{(j)}} ·`
/// (trapezoid per fracture edge).
pub fn averaging_matrix(continua: &ContinuumIndex, mesh: &FineMesh, coarse: &CoarseGrid) -> ConstraintMatrix {
    let q = 0.25 * mesh.h * mesh.h;
    let mut rows = Vec::with_capacity(continua.len());
    for cont in continua.iter() {
        let pairs: Vec<(usize, f64)> = match &cont.kind {
            ContinuumKind::Matrix => coarse
                .block_cells(mesh, cont.block)
                .into_iter()
                .flat_map(|c| mesh.cell_nodes(c).map(|n| (n, q)))
                .collect(),
            ContinuumKind::Fracture { edges, .. } => {
                edges.iter().flat_map(|e| [(e.a, 0.5 * e.length), (e.b, 0.5 * e.length)]).collect()
            }
        };
        rows.push(SparseRow::from_pairs(pairs));
    }
    let measures = rows.iter().map(SparseRow::sum).collect();
    ConstraintMatrix { rows, measures, n_nodes: mesh.n_nodes() }
}

/// `ū = C u_f` (integrals over every continuum).
pub fn average_fine(u: &[f64], c: &ConstraintMatrix) -> Result<Vec<f64>> {
    if u.len() != c.n_nodes() {
        return Err(NlmcError::Dimension { expected: c.n_nodes(), found: u.len() });
    }
    Ok(c.apply(u))
}

/// Nodal area weights `M·1`, i.e. `∫ φ_i`.
pub fn nodal_weights(mesh: &FineMesh) -> Vec<f64> {
    let q = 0.25 * mesh.h * mesh.h;
    let mut w = vec![0.0; mesh.n_nodes()];
    for c in 0..mesh.n_cells() {
        for n in mesh.cell_nodes(c) {
            w[n] += q;
        }
    }
    w
}

/// Load vector `∫ g φ_i` for a cellwise-constant source (exact).
pub fn load_cellwise(mesh: &FineMesh, g_cells: &[f64]) -> Vec<f64> {
    let q = 0.25 * mesh.h * mesh.h;
    let mut b = vec![0.0; mesh.n_nodes()];
    for (c, &g) in g_cells.iter().enumerate() {
        if g != 0.0 {
            for n in mesh.cell_nodes(c) {
                b[n] += g * q;
            }
        }
    }
    b
}

pub(crate) const GAUSS3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
pub(crate) const GAUSS3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Visits the 3×3 Gauss points of every cell as `(cell, x, y, weight, [φ_0..φ_3])`.
fn for_each_gauss_point(mesh: &FineMesh, mut f: impl FnMut(usize, f64, f64, f64, [f64; 4])) {
    let h = mesh.h;
    for c in 0..mesh.n_cells() {
        let (ci, cj) = mesh.cell_ij(c);
        for (a, &xa) in GAUSS3_X.iter().enumerate() {
            for (b, &xb) in GAUSS3_X.iter().enumerate() {
                let s = 0.5 * (xa + 1.0);
                let t = 0.5 * (xb + 1.0);
                let x = (ci as f64 + s) * h;
                let y = (cj as f64 + t) * h;
                let w = GAUSS3_W[a] * GAUSS3_W[b] * 0.25 * h * h;
                let phi = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                f(c, x, y, w, phi);
            }
        }
    }
}

/// Load vector `∫ g φ_i` by 3×3 Gauss quadrature per cell.
pub fn load_from_fn(mesh: &FineMesh, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_nodes()];
    for_each_gauss_point(mesh, |c, x, y, w, phi| {
        let gv = g(x, y) * w;
        for (n, p) in mesh.cell_nodes(c).into_iter().zip(phi) {
            b[n] += gv * p;
        }
    });
    b
}

/// `‖u_h − u‖_{L²}` by 3×3 Gauss quadrature per cell.
pub fn l2_error(mesh: &FineMesh, u: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for_each_gauss_point(mesh, |c, x, y, w, phi| {
        let uh: f64 = mesh.cell_nodes(c).iter().zip(phi).map(|(&n, p)| u[n] * p).sum();
        let d = uh - exact(x, y);
        acc += w * d * d;
    });
    acc.sqrt()
}

/// `sqrt(uᵀ M u)`
pub fn l2_norm(mass: &SparseOperator, u: &[f64]) -> f64 {
    mass.bilinear(u, u).max(0.0).sqrt()
}

pub fn check_compatibility(load: &[f64], tolerance: f64) -> Result<()> {
    let total: f64 = load.iter().sum();
    let l1: f64 = load.iter().map(|v| v.abs()).sum();
    if total.abs() > tolerance * l1 {
        return Err(NlmcError::IncompatibleSource { imbalance: total, tolerance: tolerance * l1 });
    }
    Ok(())
}

/// Solves the pure-Neumann problem `A u + λ w = b`, `wᵀ u = 0` with one scalar
/// multiplier `λ`. `w` is normally [`nodal_weights`] so that `∫ u = 0`.
///
/// Because `A 1 = 0` the multiplier is `λ = Σ b / Σ w`; the bordered system is
/// then eliminated through a sparse Cholesky factor of `A` with one node grounded,
/// followed by the gauge shift. A dense bordering row would defeat the
/// fill-reducing ordering of a direct factorization of the full system.
pub fn solve_fine_steady(stiffness: &SparseOperator, load: &[f64], weights: &[f64], tolerance: f64) -> Result<FineField> {
    let n = stiffness.dim();
    if load.len() != n || weights.len() != n {
        return Err(NlmcError::Dimension { expected: n, found: load.len().min(weights.len()) });
    }
    check_compatibility(load, tolerance)?;
    if load.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let wsum: f64 = weights.iter().sum();
    if wsum == 0.0 {
        return Err(NlmcError::InvalidArgument("gauge weights sum to zero".into()));
    }
    let lambda = load.iter().sum::<f64>() / wsum;
    let rhs: Vec<f64> = load.iter().zip(weights).map(|(b, w)| b - lambda * w).collect();

    let dofs: Vec<usize> = (1..n).collect();
    let mut local_of = vec![usize::MAX; n];
    for (l, &g) in dofs.iter().enumerate() {
        local_of[g] = l;
    }
    let grounded = SparseOperator::from_triplets(n - 1, &stiffness.principal_submatrix(&dofs, &local_of), true)?;
    let chol = SparseSpd::new(&grounded, "grounded fine stiffness")?;
    let mut u = vec![0.0; n];
    u[1..].copy_from_slice(&chol.solve(&rhs[1..]));
    // iterative refinement against the full operator
    for _ in 0..4 {
        let au = stiffness.apply(&u);
        let res: Vec<f64> = rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
        if norm2(&res) <= 0.01 * tolerance * norm2(load) {
            break;
        }
        let du = chol.solve(&res[1..]);
        u[1..].iter_mut().zip(&du).for_each(|(a, d)| *a += d);
    }
    let shift = u.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() / wsum;
    u.iter_mut().for_each(|v| *v -= shift);
    let rel = steady_backward_error(stiffness, &u, &rhs);
    if rel > tolerance {
        return Err(NlmcError::Residual { what: "fine steady solve".into(), residual: rel, tolerance });
    }
    Ok(u)
}

/// Normwise backward error `‖A u − b‖ / (‖A‖ ‖u‖ + ‖b‖)` with `‖A‖` the largest
/// absolute row sum. Once the operator norm dwarfs the load, this is the
/// quantity a stable direct solve controls; the plain ratio `‖A u − b‖ / ‖b‖`
/// bottoms out near `ε ‖A‖ ‖u‖ / ‖b‖`.
pub fn steady_backward_error(stiffness: &SparseOperator, u: &[f64], rhs: &[f64]) -> f64 {
    let au = stiffness.apply(u);
    let res: Vec<f64> = rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
    let denom = stiffness.abs_row_sum_max() * norm2(u) + norm2(rhs);
    if denom == 0.0 {
        0.0
    } else {
        norm2(&res) / denom
    }
}

/// Plain relative residual `‖A u − b‖ / ‖b‖`.
pub fn steady_relative_residual(stiffness: &SparseOperator, u: &[f64], rhs: &[f64]) -> f64 {
    let au = stiffness.apply(u);
    let res: Vec<f64> = rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
    norm2(&res) / norm2(rhs)
}

/// Backward Euler for `M u' + A u = b`: `(M + dt A) uⁿ = dt b + M uⁿ⁻¹`.
pub struct FineTransient<'a> {
    mass: &'a SparseOperator,
    system: SparseSpd,
    dt: f64,
}

impl<'a> FineTransient<'a> {
    pub fn new(stiffness: &SparseOperator, mass: &'a SparseOperator, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(NlmcError::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let sys = mass.add_scaled(dt, stiffness)?;
        Ok(Self { mass, system: SparseSpd::new(&sys, "fine backward-Euler matrix M + dt A")?, dt })
    }

    pub fn step(&self, u_prev: &[f64], load: &[f64]) -> Vec<f64> {
        let mut rhs = self.mass.apply(u_prev);
        for (r, b) in rhs.iter_mut().zip(load) {
            *r += self.dt * b;
        }
        self.system.solve(&rhs)
    }
}
