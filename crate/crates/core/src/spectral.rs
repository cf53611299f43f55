//! Spectral auxiliary spaces and the constraint energy minimizing (CEM) basis.
//!
//! Each block carries the leading eigenfunctions of `a_i φ = λ s_i φ`, where
//! `a_i` is the energy form restricted to the closed block and
//! `s_i(u, v) = ∫ κ̃ u v` with `κ̃ = κ Σ_j |∇χ_j|²` for the bilinear coarse
//! partition of unity `χ_j`. Fracture edges contribute `c_f κ̃` along their
//! length, so conductive channels produce small eigenvalues.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::basis::{BasisOptions, BasisSet, MultiscaleBasis, RegionProblem};
use crate::error::{NlmcError, Result, ResultExt};
use crate::fem::{ConstraintMatrix, DofScaling, GAUSS3_W, GAUSS3_X, Q1_STIFFNESS};
use crate::geometry::{oversample, CoarseGrid, ContinuumIndex, FineMesh, FractureNetwork, Layers, NodeRect};
use crate::linalg::{generalized_symmetric_eigen, SparseOperator, SparseRow};

/// Leading generalized eigenpairs of one block.
#[derive(Clone, Debug)]
pub struct AuxiliarySpace {
    pub block: usize,
    /// Closed node rectangle of the block; modes are stored row-major on it.
    pub nodes: NodeRect,
    /// Every eigenvalue of the block problem, ascending.
    pub eigenvalues: Vec<f64>,
    /// `s_i`-orthonormal eigenvectors, one column per retained mode.
    pub modes: Mat<f64>,
    /// Smallest excluded eigenvalue `Λ`, if any mode was left out.
    pub excluded: Option<f64>,
    pub s_matrix: Mat<f64>,
}

impl AuxiliarySpace {
    pub fn count(&self) -> usize {
        self.modes.ncols()
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.modes.col(k).iter().copied().collect()
    }

    /// `s_i(·, φ_k)` as a row over global nodes.
    pub fn constraint_row(&self, mesh: &FineMesh, k: usize) -> SparseRow {
        let n = self.nodes.len();
        let phi = self.modes.col(k);
        let global = self.nodes.nodes(mesh);
        let pairs = (0..n)
            .map(|a| {
                let v: f64 = (0..n).map(|b| self.s_matrix[(a, b)] * phi[b]).sum();
                (global[a], v)
            })
            .filter(|(_, v)| *v != 0.0)
            .collect();
        SparseRow::from_pairs(pairs)
    }

    /// Eigenvalues below `tau · λ_max`.
    pub fn count_below(&self, tau: f64) -> usize {
        let max = self.eigenvalues.last().copied().unwrap_or(0.0);
        self.eigenvalues.iter().filter(|&&l| l < tau * max).count()
    }
}

fn edges_in_rect<'a>(mesh: &'a FineMesh, fractures: &'a FractureNetwork, rect: NodeRect) -> impl Iterator<Item = (usize, usize, f64, f64)> + 'a {
    fractures.edges(mesh).filter_map(move |e| {
        let (ia, ja) = mesh.node_ij(e.a);
        let (ib, jb) = mesh.node_ij(e.b);
        (rect.contains(ia, ja) && rect.contains(ib, jb)).then(|| {
            (rect.local(ia, ja), rect.local(ib, jb), e.length, fractures.fractures[e.fracture].conductivity)
        })
    })
}

/// Dense `a_i` on the closed block: κ-weighted Q1 stiffness plus fracture edges.
pub fn local_stiffness(mesh: &FineMesh, coarse: &CoarseGrid, fractures: &FractureNetwork, kappa: &[f64], block: usize) -> Mat<f64> {
    let rect = coarse.block_nodes_rect(block);
    let mut a = Mat::<f64>::zeros(rect.len(), rect.len());
    for c in coarse.block_cells(mesh, block) {
        let loc = mesh.cell_nodes(c).map(|n| {
            let (i, j) = mesh.node_ij(n);
            rect.local(i, j)
        });
        for p in 0..4 {
            for q in 0..4 {
                a[(loc[p], loc[q])] += kappa[c] * Q1_STIFFNESS[p][q];
            }
        }
    }
    for (la, lb, len, cf) in edges_in_rect(mesh, fractures, rect) {
        let v = cf / len;
        a[(la, la)] += v;
        a[(lb, lb)] += v;
        a[(la, lb)] -= v;
        a[(lb, la)] -= v;
    }
    a
}

/// `Σ_j |∇χ_j|²` for the four bilinear hat functions of a block of size `H`,
/// at local coordinates `(s, t) ∈ [0, 1]²`.
fn pu_gradient_sum(s: f64, t: f64, big_h: f64) -> f64 {
    2.0 * ((1.0 - s).powi(2) + s * s + (1.0 - t).powi(2) + t * t) / (big_h * big_h)
}

/// Dense `s_i` on the closed block.
pub fn local_weighted_mass(mesh: &FineMesh, coarse: &CoarseGrid, fractures: &FractureNetwork, kappa: &[f64], block: usize) -> Mat<f64> {
    let rect = coarse.block_nodes_rect(block);
    let (h, big_h) = (mesh.h, coarse.h);
    let (x0, y0) = (rect.i0 as f64 * h, rect.j0 as f64 * h);
    let mut s_mat = Mat::<f64>::zeros(rect.len(), rect.len());
    for c in coarse.block_cells(mesh, block) {
        let (ci, cj) = mesh.cell_ij(c);
        let loc = mesh.cell_nodes(c).map(|n| {
            let (i, j) = mesh.node_ij(n);
            rect.local(i, j)
        });
        for (ga, &xa) in GAUSS3_X.iter().enumerate() {
            for (gb, &xb) in GAUSS3_X.iter().enumerate() {
                let (u, v) = (0.5 * (xa + 1.0), 0.5 * (xb + 1.0));
                let x = (ci as f64 + u) * h;
                let y = (cj as f64 + v) * h;
                let w = GAUSS3_W[ga] * GAUSS3_W[gb] * 0.25 * h * h
                    * kappa[c]
                    * pu_gradient_sum((x - x0) / big_h, (y - y0) / big_h, big_h);
                let phi = [(1.0 - u) * (1.0 - v), u * (1.0 - v), u * v, (1.0 - u) * v];
                for p in 0..4 {
                    for q in 0..4 {
                        s_mat[(loc[p], loc[q])] += w * phi[p] * phi[q];
                    }
                }
            }
        }
    }
    for (la, lb, len, cf) in edges_in_rect(mesh, fractures, rect) {
        let pa = [(la % rect.width()) as f64 * h + x0, (la / rect.width()) as f64 * h + y0];
        let pb = [(lb % rect.width()) as f64 * h + x0, (lb / rect.width()) as f64 * h + y0];
        for (g, &xg) in GAUSS3_X.iter().enumerate() {
            let tau = 0.5 * (xg + 1.0);
            let x = pa[0] + tau * (pb[0] - pa[0]);
            let y = pa[1] + tau * (pb[1] - pa[1]);
            let w = 0.5 * GAUSS3_W[g] * len * cf * pu_gradient_sum((x - x0) / big_h, (y - y0) / big_h, big_h);
            let phi = [1.0 - tau, tau];
            let ids = [la, lb];
            for p in 0..2 {
                for q in 0..2 {
                    s_mat[(ids[p], ids[q])] += w * phi[p] * phi[q];
                }
            }
        }
    }
    s_mat
}

/// Solves `a φ = λ s φ` and keeps the first `l` modes.
pub fn build_auxiliary_space(block: usize, nodes: NodeRect, a: &Mat<f64>, s: &Mat<f64>, l: usize) -> Result<AuxiliarySpace> {
    let dim = a.nrows();
    if l == 0 || l > dim {
        return Err(NlmcError::InvalidArgument(format!(
            "block {block}: requested {l} auxiliary modes but the local space has dimension {dim}"
        )));
    }
    let (vals, vecs) = generalized_symmetric_eigen(a, s).context(|| format!("eigenproblem of block {block}"))?;
    let modes = Mat::from_fn(dim, l, |r, c| vecs[(r, c)]);
    Ok(AuxiliarySpace {
        block,
        nodes,
        excluded: vals.get(l).copied(),
        eigenvalues: vals,
        modes,
        s_matrix: s.to_owned(),
    })
}

/// Smallest singular value, relative to the largest, below which the
/// continuum means of the retained modes count as rank deficient.
pub const RESOLVED_MEANS: f64 = 1e-2;

/// Continuum means of each retained mode over the block's continua, every
/// column scaled by the mode's largest nodal magnitude.
pub fn mode_continuum_means(aux: &AuxiliarySpace, mesh: &FineMesh, continua: &ContinuumIndex, constraints: &ConstraintMatrix) -> Mat<f64> {
    let global = aux.nodes.nodes(mesh);
    let range = continua.block_range(aux.block);
    let mut out = Mat::zeros(range.len(), aux.count());
    for k in 0..aux.count() {
        let mut field = vec![0.0; mesh.n_nodes()];
        let phi = aux.modes.col(k);
        let mut peak = 0.0_f64;
        for (a, &g) in global.iter().enumerate() {
            field[g] = phi[a];
            peak = peak.max(phi[a].abs());
        }
        for (r, c) in range.clone().enumerate() {
            out[(r, k)] = constraints.scaled_row(c, DofScaling::Average).dot(&field) / peak;
        }
    }
    out
}

fn means_resolved(means: &Mat<f64>) -> Result<bool> {
    let gram = means * means.transpose();
    let ev = crate::linalg::symmetric_eigenvalues(&gram)?;
    let (lo, hi) = (ev[0].max(0.0).sqrt(), ev[ev.len() - 1].max(0.0).sqrt());
    Ok(hi > 0.0 && lo >= RESOLVED_MEANS * hi)
}

/// Auxiliary spaces for every block. Unless `fixed` is given, a block keeps
/// its first `1 + L_i` modes and then further modes in ascending order until
/// the continuum means of the retained modes have full rank. Where fractures
/// cross inside a block, a low mode can oscillate along the network with
/// vanishing means and would otherwise displace the fracture mode.
pub fn build_auxiliary_spaces(
    mesh: &FineMesh,
    coarse: &CoarseGrid,
    fractures: &FractureNetwork,
    continua: &ContinuumIndex,
    constraints: &ConstraintMatrix,
    kappa: &[f64],
    fixed: Option<usize>,
) -> Result<Vec<AuxiliarySpace>> {
    (0..coarse.n_blocks())
        .into_par_iter()
        .map(|b| {
            let a = local_stiffness(mesh, coarse, fractures, kappa, b);
            let s = local_weighted_mass(mesh, coarse, fractures, kappa, b);
            let rect = coarse.block_nodes_rect(b);
            if let Some(l) = fixed {
                return build_auxiliary_space(b, rect, &a, &s, l);
            }
            let mut l = 1 + continua.fracture_count(b);
            let mut aux = build_auxiliary_space(b, rect, &a, &s, l)?;
            while l < a.nrows() && !means_resolved(&mode_continuum_means(&aux, mesh, continua, constraints))? {
                l += 1;
                aux = build_auxiliary_space(b, rect, &a, &s, l)?;
            }
            Ok(aux)
        })
        .collect()
}

/// Builds CEM bases from per-block auxiliary spaces.
pub struct CemBuilder<'a> {
    pub mesh: &'a FineMesh,
    pub coarse: &'a CoarseGrid,
    pub stiffness: &'a SparseOperator,
    pub aux: &'a [AuxiliarySpace],
    pub options: BasisOptions,
}

impl<'a> CemBuilder<'a> {
    /// Flat index of the first mode of each block.
    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.aux.len() + 1);
        let mut acc = 0;
        for a in self.aux {
            off.push(acc);
            acc += a.count();
        }
        off.push(acc);
        off
    }

    /// Bases `ψ_j^{(i)}` for every auxiliary mode `j` of block `i`.
    pub fn build_block(&self, block: usize, layers: Layers) -> Result<Vec<MultiscaleBasis>> {
        let region = oversample(self.coarse, block, layers);
        let problem = RegionProblem::new(self.mesh, self.stiffness, region, self.options.policy);
        let mut rows = Vec::new();
        let mut targets_at = Vec::new();
        for &l in &problem.region.blocks {
            for k in 0..self.aux[l].count() {
                let row = problem.localize(&self.aux[l].constraint_row(self.mesh, k));
                if row.nnz() == 0 {
                    continue;
                }
                if l == block {
                    targets_at.push(rows.len());
                }
                rows.push(row);
            }
        }
        if targets_at.len() != self.aux[block].count() {
            return Err(NlmcError::RedundantConstraint {
                index: block,
                detail: format!("an auxiliary mode of block {block} has no free degrees of freedom"),
            });
        }
        let sp = problem.factor(rows.clone())?;
        let mut targets = Mat::<f64>::zeros(rows.len(), targets_at.len());
        for (col, &r) in targets_at.iter().enumerate() {
            targets[(r, col)] = 1.0;
        }
        let solved = problem
            .solve(&sp, &rows, &targets, self.options.tolerance)
            .context(|| format!("CEM problem around block {block}"))?;
        Ok(solved
            .into_iter()
            .enumerate()
            .map(|(j, (values, energy, constraint_residual))| MultiscaleBasis {
                block,
                continuum: j,
                layers,
                support: problem.region.nodes,
                values,
                constraint_residual,
                energy,
            })
            .collect())
    }

    pub fn build_cem_basis(&self, block: usize, j: usize, layers: Layers) -> Result<MultiscaleBasis> {
        let mut all = self.build_block(block, layers)?;
        if j >= all.len() {
            return Err(NlmcError::InvalidArgument(format!("block {block} has {} auxiliary modes, asked for {j}", all.len())));
        }
        Ok(all.swap_remove(j))
    }

    pub fn build_all(&self, layers: Layers) -> Result<BasisSet> {
        let per_block: Vec<Vec<MultiscaleBasis>> =
            (0..self.coarse.n_blocks()).into_par_iter().map(|b| self.build_block(b, layers)).collect::<Result<_>>()?;
        let bases: Vec<MultiscaleBasis> = per_block.into_iter().flatten().collect();
        debug_assert_eq!(bases.len(), *self.offsets().last().unwrap());
        Ok(BasisSet { layers, bases })
    }
}

/// `|cos|` between every basis restricted to the block and every retained
/// eigenfunction, in the `ℓ²` inner product over block nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCorrelation {
    pub block: usize,
    /// `rows[b][k]` pairs basis `b` with mode `k`.
    pub rows: Vec<Vec<f64>>,
}

impl ModeCorrelation {
    /// Index of the best-correlated mode for basis `b`.
    pub fn best_mode(&self, b: usize) -> usize {
        let row = &self.rows[b];
        (0..row.len()).max_by(|&x, &y| row[x].total_cmp(&row[y])).unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,basis,mode,abs_cos\n");
        for (b, row) in self.rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{b},{k},{v:.12e}", self.block);
            }
        }
        out
    }
}

pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab.abs() / (aa * bb).sqrt()
}

pub fn compare_basis_modes(aux: &AuxiliarySpace, bases: &[MultiscaleBasis]) -> ModeCorrelation {
    let modes: Vec<Vec<f64>> = (0..aux.count()).map(|k| aux.mode(k)).collect();
    let rows = bases
        .iter()
        .map(|b| {
            let restricted = b.restrict(&aux.nodes);
            modes.iter().map(|m| abs_cosine(&restricted, m)).collect()
        })
        .collect();
    ModeCorrelation { block: aux.block, rows }
}

/// Combinations of the CEM bases of `block` whose continuum averages on the
/// block itself follow the Kronecker pattern, i.e. the element of the block's CEM
/// span that plays the role of each simplified basis. When the block carries
/// more CEM bases than continua, the combination of least energy is taken.
/// Values are returned on the block's closed node rectangle.
#[allow(clippy::too_many_arguments)]
pub fn continuum_aligned_cem(
    mesh: &FineMesh,
    coarse: &CoarseGrid,
    continua: &ContinuumIndex,
    constraints: &ConstraintMatrix,
    scaling: DofScaling,
    stiffness: &SparseOperator,
    cem: &BasisSet,
    block: usize,
) -> Result<Vec<Vec<f64>>> {
    let range = continua.block_range(block);
    let n = range.len();
    let rect = coarse.block_nodes_rect(block);
    let members: Vec<&MultiscaleBasis> = cem.bases.iter().filter(|b| b.block == block).collect();
    if members.len() < n {
        return Err(NlmcError::InvalidArgument(format!(
            "block {block}: {} CEM bases for {n} continua",
            members.len()
        )));
    }
    let l = members.len();
    let rows: Vec<SparseRow> = range.clone().map(|k| constraints.scaled_row(k, scaling)).collect();
    let dense: Vec<Vec<f64>> = members.iter().map(|b| b.to_dense(mesh)).collect();
    let m = Mat::from_fn(n, l, |r, c| rows[r].dot(&dense[c]));
    let coeffs = if l == n {
        m.partial_piv_lu().solve(Mat::<f64>::identity(n, n))
    } else {
        // c = E⁻¹Mᵀ (M E⁻¹ Mᵀ)⁻¹ minimizes cᵀEc subject to M c = I
        let applied: Vec<Vec<f64>> = dense.iter().map(|d| stiffness.apply(d)).collect();
        let e = Mat::from_fn(l, l, |r, c| crate::linalg::dot(&dense[r], &applied[c]));
        let e_inv_mt = e.partial_piv_lu().solve(m.transpose().to_owned());
        let schur = &m * &e_inv_mt;
        &e_inv_mt * schur.partial_piv_lu().solve(Mat::<f64>::identity(n, n))
    };
    if coeffs.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(NlmcError::SingularSystem(format!("block {block}: CEM averages are linearly dependent")));
    }
    Ok((0..n)
        .map(|col| {
            let mut v = vec![0.0; rect.len()];
            for (j, b) in members.iter().enumerate() {
                let r = b.restrict(&rect);
                v.iter_mut().zip(&r).for_each(|(a, x)| *a += coeffs[(j, col)] * x);
            }
            v
        })
        .collect())
}

/// `|cos|` on the block between each simplified basis and its continuum-aligned
/// CEM counterpart.
#[allow(clippy::too_many_arguments)]
pub fn cem_simplified_correlation(
    mesh: &FineMesh,
    coarse: &CoarseGrid,
    continua: &ContinuumIndex,
    constraints: &ConstraintMatrix,
    scaling: DofScaling,
    stiffness: &SparseOperator,
    cem: &BasisSet,
    simplified: &BasisSet,
    block: usize,
) -> Result<Vec<f64>> {
    let rect = coarse.block_nodes_rect(block);
    let aligned = continuum_aligned_cem(mesh, coarse, continua, constraints, scaling, stiffness, cem, block)?;
    Ok(continua
        .block_range(block)
        .zip(&aligned)
        .map(|(k, a)| abs_cosine(&simplified.bases[k].restrict(&rect), a))
        .collect())
}
