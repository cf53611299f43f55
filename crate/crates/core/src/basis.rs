//! Constrained energy-minimizing basis functions on oversampled regions.
//!
//! For continuum `m` of block `i` the basis minimizes `a(ψ, ψ)` over fine
//! functions on `K_i⁺` subject to a Kronecker pattern of continuum functionals:
//! unit value on its own continuum and zero on every other matrix or fracture
//! continuum of every block in the region. The minimizer is the primal part of
//! one saddle-point solve; all continua of a block share the factorization, and
//! blocks whose oversampled regions coincide share it as well.

use std::collections::BTreeMap;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlmcError, Result, ResultExt};
use crate::fem::{ConstraintMatrix, DofScaling};
use crate::geometry::{oversample, CoarseGrid, ContinuumIndex, FineMesh, Layers, NodeRect, OversampleRegion};
use crate::linalg::{SaddlePoint, SparseOperator, SparseRow};

/// Boundary treatment of the local problems on `K_i⁺`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Zero Dirichlet on the whole region boundary.
    DirichletEverywhere,
    /// Zero Dirichlet on the artificial boundary only; the natural Neumann
    /// condition is kept where the region meets the physical boundary.
    #[default]
    PhysicalOnDomainBoundary,
}

/// A fine-grid basis function stored densely on its support rectangle
/// (zero elsewhere).
#[derive(Clone, Debug)]
pub struct MultiscaleBasis {
    pub block: usize,
    /// Local continuum id within the block (0 = matrix) or auxiliary-mode index.
    pub continuum: usize,
    pub layers: Layers,
    pub support: NodeRect,
    /// Row-major values on `support`, x fastest.
    pub values: Vec<f64>,
    /// `‖C_r ψ − e‖_∞` over all constraints of the region.
    pub constraint_residual: f64,
    /// `a(ψ, ψ)`
    pub energy: f64,
}

impl MultiscaleBasis {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.support.contains(i, j) {
            self.values[self.support.local(i, j)]
        } else {
            0.0
        }
    }

    /// Extends ψ by zero to the whole mesh.
    pub fn to_dense(&self, mesh: &FineMesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.n_nodes()];
        self.add_scaled_to(mesh, 1.0, &mut out);
        out
    }

    pub fn add_scaled_to(&self, mesh: &FineMesh, alpha: f64, out: &mut [f64]) {
        let w = self.support.width();
        for (r, j) in (self.support.j0..=self.support.j1).enumerate() {
            let start = mesh.node(self.support.i0, j);
            let row = &self.values[r * w..(r + 1) * w];
            for (o, v) in out[start..start + w].iter_mut().zip(row) {
                *o += alpha * v;
            }
        }
    }

    /// `Σ ψ_n x_n` over the support.
    pub fn dot_dense(&self, mesh: &FineMesh, x: &[f64]) -> f64 {
        let w = self.support.width();
        let mut acc = 0.0;
        for (r, j) in (self.support.j0..=self.support.j1).enumerate() {
            let start = mesh.node(self.support.i0, j);
            acc += self.values[r * w..(r + 1) * w].iter().zip(&x[start..start + w]).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    /// Values on nodes of `rect` (row-major), zero outside the support.
    pub fn restrict(&self, rect: &NodeRect) -> Vec<f64> {
        let mut out = Vec::with_capacity(rect.len());
        for j in rect.j0..=rect.j1 {
            for i in rect.i0..=rect.i1 {
                out.push(self.value(i, j));
            }
        }
        out
    }
}

/// Free degrees of freedom of an oversampled region and the restricted stiffness.
pub(crate) struct RegionProblem {
    pub region: OversampleRegion,
    pub dofs: Vec<usize>,
    /// Global node -> local dof, `usize::MAX` when fixed or outside.
    pub local_of: Vec<usize>,
    /// Local dof -> position in the region rectangle.
    rect_pos: Vec<usize>,
    pub a_entries: Vec<(usize, usize, f64)>,
}

/// Maximum number of right-hand sides solved at once; bounds peak memory on
/// large shared regions.
const SOLVE_CHUNK: usize = 64;

impl RegionProblem {
    pub fn new(mesh: &FineMesh, stiffness: &SparseOperator, region: OversampleRegion, policy: BoundaryPolicy) -> Self {
        let rect = region.nodes;
        let mut dofs = Vec::with_capacity(rect.len());
        let mut rect_pos = Vec::with_capacity(rect.len());
        for j in rect.j0..=rect.j1 {
            for i in rect.i0..=rect.i1 {
                let fixed = match policy {
                    BoundaryPolicy::PhysicalOnDomainBoundary => region.is_artificial_boundary(i, j),
                    BoundaryPolicy::DirichletEverywhere => rect.on_boundary(i, j),
                };
                if !fixed {
                    dofs.push(mesh.node(i, j));
                    rect_pos.push(rect.local(i, j));
                }
            }
        }
        let mut local_of = vec![usize::MAX; mesh.n_nodes()];
        for (l, &g) in dofs.iter().enumerate() {
            local_of[g] = l;
        }
        let a_entries = stiffness.principal_submatrix(&dofs, &local_of);
        Self { region, dofs, local_of, rect_pos, a_entries }
    }

    /// Restricts a global row to the free degrees of freedom.
    pub fn localize(&self, row: &SparseRow) -> SparseRow {
        let pairs = row
            .idx
            .iter()
            .zip(&row.val)
            .filter_map(|(&g, &v)| {
                let l = self.local_of[g];
                (l != usize::MAX).then_some((l, v))
            })
            .collect();
        SparseRow::from_pairs(pairs)
    }

    pub fn factor(&self, rows: Vec<SparseRow>) -> Result<SaddlePoint> {
        SaddlePoint::factor(self.dofs.len(), &self.a_entries, rows)
    }

    /// Solves for each target pattern (columns of `targets`, one per constraint row)
    /// and returns `(values on the region rectangle, a(ψ, ψ), ‖Bψ − e‖_∞)`.
    pub fn solve(&self, sp: &SaddlePoint, rows: &[SparseRow], targets: &Mat<f64>, tol: f64) -> Result<Vec<(Vec<f64>, f64, f64)>> {
        let k = targets.nrows();
        let mut out = Vec::with_capacity(targets.ncols());
        let mut c0 = 0;
        while c0 < targets.ncols() {
            let c1 = (c0 + SOLVE_CHUNK).min(targets.ncols());
            let chunk = Mat::from_fn(k, c1 - c0, |r, c| targets[(r, c0 + c)]);
            let sol = sp.solve(&chunk, tol)?;
            for c in 0..c1 - c0 {
                let x: Vec<f64> = sol.primal.col(c).iter().copied().collect();
                let mut ax = vec![0.0; x.len()];
                for &(r, cc, v) in &self.a_entries {
                    ax[r] += v * x[cc];
                }
                let energy = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
                let residual = rows
                    .iter()
                    .enumerate()
                    .map(|(r, row)| (row.dot(&x) - chunk[(r, c)]).abs())
                    .fold(0.0, f64::max);
                let mut values = vec![0.0; self.region.nodes.len()];
                for (l, &p) in self.rect_pos.iter().enumerate() {
                    values[p] = x[l];
                }
                out.push((values, energy, residual));
            }
            c0 = c1;
        }
        Ok(out)
    }
}

/// Settings shared by every local basis problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisOptions {
    pub policy: BoundaryPolicy,
    pub scaling: DofScaling,
    /// Saddle-point residual tolerance.
    pub tolerance: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self { policy: BoundaryPolicy::default(), scaling: DofScaling::default(), tolerance: 1e-9 }
    }
}

/// Every basis function for one oversampling setting, in continuum order.
#[derive(Clone, Debug)]
pub struct BasisSet {
    pub layers: Layers,
    pub bases: Vec<MultiscaleBasis>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// `u_ms = Σ u_T[k] ψ_k`
    pub fn downscale(&self, mesh: &FineMesh, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.bases.len() {
            return Err(NlmcError::Dimension { expected: self.bases.len(), found: coeffs.len() });
        }
        let mut out = vec![0.0; mesh.n_nodes()];
        for (b, &c) in self.bases.iter().zip(coeffs) {
            if c != 0.0 {
                b.add_scaled_to(mesh, c, &mut out);
            }
        }
        Ok(out)
    }

    /// `Ψᵀ x`
    pub fn project(&self, mesh: &FineMesh, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != mesh.n_nodes() {
            return Err(NlmcError::Dimension { expected: mesh.n_nodes(), found: x.len() });
        }
        Ok(self.bases.iter().map(|b| b.dot_dense(mesh, x)).collect())
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.bases.iter().map(|b| b.constraint_residual).fold(0.0, f64::max)
    }
}

/// Builds simplified bases for a fixed fine problem and continuum enumeration.
pub struct BasisBuilder<'a> {
    pub mesh: &'a FineMesh,
    pub coarse: &'a CoarseGrid,
    pub continua: &'a ContinuumIndex,
    pub stiffness: &'a SparseOperator,
    pub constraints: &'a ConstraintMatrix,
    pub options: BasisOptions,
}

impl<'a> BasisBuilder<'a> {
    /// Flat continuum ids constrained in `region` (all continua of member blocks).
    pub fn region_continua(&self, region: &OversampleRegion) -> Vec<usize> {
        region.blocks.iter().flat_map(|&b| self.continua.block_range(b)).collect()
    }

    /// Localized constraint rows of the region. A continuum whose nodes all lie on
    /// the artificial boundary has an identically zero functional there, so its
    /// zero-average condition holds automatically and the row is dropped.
    fn active_rows(&self, problem: &RegionProblem) -> (Vec<usize>, Vec<SparseRow>) {
        self.region_continua(&problem.region)
            .into_iter()
            .map(|k| (k, problem.localize(&self.constraints.scaled_row(k, self.options.scaling))))
            .filter(|(_, row)| row.nnz() > 0)
            .unzip()
    }

    fn describe(&self, k: usize) -> String {
        let c = self.continua.get(k);
        if c.is_matrix() {
            format!("matrix continuum of block {}", c.block)
        } else {
            format!("fracture continuum {} of block {}", c.local, c.block)
        }
    }

    /// Solves the local problems of every block in `centers`, all of which share `region`'s rectangle.
    fn build_group(&self, centers: &[usize], layers: Layers) -> Result<Vec<(usize, MultiscaleBasis)>> {
        let region = oversample(self.coarse, centers[0], layers);
        let problem = RegionProblem::new(self.mesh, self.stiffness, region, self.options.policy);
        let (ids, rows) = self.active_rows(&problem);
        let sp = problem.factor(rows.clone()).map_err(|e| match e {
            NlmcError::RedundantConstraint { index, detail } => NlmcError::RedundantConstraint {
                index: ids[index],
                detail: format!("{}: {detail}", self.describe(ids[index])),
            },
            other => other,
        })?;

        let targets_of: Vec<usize> = centers.iter().flat_map(|&c| self.continua.block_range(c)).collect();
        let mut targets = Mat::<f64>::zeros(ids.len(), targets_of.len());
        for (col, k) in targets_of.iter().enumerate() {
            let r = ids.binary_search(k).map_err(|_| NlmcError::RedundantConstraint {
                index: *k,
                detail: format!("{} has no free degrees of freedom", self.describe(*k)),
            })?;
            targets[(r, col)] = 1.0;
        }
        let solved = problem
            .solve(&sp, &rows, &targets, self.options.tolerance)
            .context(|| format!("local problem around block {}", centers[0]))?;

        Ok(targets_of
            .into_iter()
            .zip(solved)
            .map(|(k, (values, energy, constraint_residual))| {
                let c = self.continua.get(k);
                let basis = MultiscaleBasis {
                    block: c.block,
                    continuum: c.local,
                    layers,
                    support: problem.region.nodes,
                    values,
                    constraint_residual,
                    energy,
                };
                (k, basis)
            })
            .collect())
    }

    /// Bases `ψ_m^{(i)}` for every continuum `m` of block `i`.
    pub fn build_simplified_basis(&self, block: usize, layers: Layers) -> Result<Vec<MultiscaleBasis>> {
        Ok(self.build_group(&[block], layers)?.into_iter().map(|(_, b)| b).collect())
    }

    /// Bases for every continuum. Blocks whose oversampled regions coincide share
    /// one factorization.
    pub fn build_all(&self, layers: Layers) -> Result<BasisSet> {
        let mut groups: BTreeMap<(usize, usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for b in 0..self.coarse.n_blocks() {
            groups.entry(oversample(self.coarse, b, layers).block_bounds).or_default().push(b);
        }
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        let built: Vec<Vec<(usize, MultiscaleBasis)>> =
            groups.par_iter().map(|centers| self.build_group(centers, layers)).collect::<Result<_>>()?;
        let mut all: Vec<(usize, MultiscaleBasis)> = built.into_iter().flatten().collect();
        all.sort_by_key(|(k, _)| *k);
        Ok(BasisSet { layers, bases: all.into_iter().map(|(_, b)| b).collect() })
    }
}

/// `d_k = max |ψ|` over the closed blocks at Chebyshev distance `k` from the
/// owning block, for every block inside the support.
pub fn basis_decay_profile(basis: &MultiscaleBasis, coarse: &CoarseGrid) -> Vec<f64> {
    let mut profile: Vec<f64> = Vec::new();
    for b in 0..coarse.n_blocks() {
        let rect = coarse.block_nodes_rect(b);
        if rect.intersect(&basis.support) != Some(rect) {
            continue;
        }
        let k = coarse.block_distance(basis.block, b);
        if profile.len() <= k {
            profile.resize(k + 1, 0.0);
        }
        let mut m = 0.0_f64;
        for j in rect.j0..=rect.j1 {
            for i in rect.i0..=rect.i1 {
                m = m.max(basis.value(i, j).abs());
            }
        }
        profile[k] = profile[k].max(m);
    }
    profile
}
