//! Coarse non-local system: transmissibilities, finite-volume form, coarse mass,
//! steady and transient coarse solves, and comparison against averaged fine fields.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{NlmcError, Result};
use crate::fem::{ConstraintMatrix, DofScaling};
use crate::geometry::{CoarseGrid, ContinuumIndex, FineMesh, NodeRect};
use crate::linalg::{dense_apply, dense_max_abs, norm2, norm_inf, solve_gauged_dense, DenseSpd, SparseOperator};

/// `B ψ` for every basis, kept on the support grown by one node.
fn apply_to_bases(mesh: &FineMesh, op: &SparseOperator, set: &BasisSet) -> Vec<(NodeRect, Vec<f64>)> {
    set.bases
        .par_iter()
        .map(|b| {
            let y = op.apply(&b.to_dense(mesh));
            let s = b.support;
            let r = NodeRect {
                i0: s.i0.saturating_sub(1),
                i1: (s.i1 + 1).min(mesh.nx),
                j0: s.j0.saturating_sub(1),
                j1: (s.j1 + 1).min(mesh.ny),
            };
            let vals = r.nodes(mesh).into_iter().map(|n| y[n]).collect();
            (r, vals)
        })
        .collect()
}

fn rect_dot(ra: &NodeRect, va: &[f64], rb: &NodeRect, vb: &[f64]) -> f64 {
    let Some(r) = ra.intersect(rb) else { return 0.0 };
    let w = r.width();
    let mut acc = 0.0;
    for j in r.j0..=r.j1 {
        let a0 = ra.local(r.i0, j);
        let b0 = rb.local(r.i0, j);
        acc += va[a0..a0 + w].iter().zip(&vb[b0..b0 + w]).map(|(x, y)| x * y).sum::<f64>();
    }
    acc
}

/// `Ψᵀ B Ψ` over overlapping supports; the upper triangle is computed and mirrored.
fn gram(mesh: &FineMesh, op: &SparseOperator, set: &BasisSet) -> Result<Mat<f64>> {
    if op.dim() != mesh.n_nodes() {
        return Err(NlmcError::Dimension { expected: mesh.n_nodes(), found: op.dim() });
    }
    let n = set.len();
    let applied = apply_to_bases(mesh, op, set);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (ra, va) = &applied[k];
            (k..n).map(|l| rect_dot(ra, va, &set.bases[l].support, &set.bases[l].values)).collect()
        })
        .collect();
    let mut t = Mat::<f64>::zeros(n, n);
    for (k, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            t[(k, k + off)] = v;
            t[(k + off, k)] = v;
        }
    }
    Ok(t)
}

/// `T = Ψᵀ A_f Ψ`, i.e. `T[k, l] = a(ψ_k, ψ_l)`.
pub fn assemble_transmissibility(mesh: &FineMesh, stiffness: &SparseOperator, set: &BasisSet) -> Result<Mat<f64>> {
    gram(mesh, stiffness, set)
}

/// `M_T = Ψᵀ M_f Ψ`
pub fn assemble_coarse_mass(mesh: &FineMesh, mass: &SparseOperator, set: &BasisSet) -> Result<Mat<f64>> {
    gram(mesh, mass, set)
}

/// Finite-volume form: off-diagonals of `T` are kept, the diagonal is replaced by
/// minus the sum of the row's off-diagonals, so every row sums to zero.
pub fn finite_volume_correct(t: &Mat<f64>) -> Mat<f64> {
    let n = t.nrows();
    let mut a = t.to_owned();
    for i in 0..n {
        a[(i, i)] = 0.0;
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| t[(i, j)]).sum();
        a[(i, i)] = -s;
    }
    a
}

/// `max_i |Σ_j A_ij| / max |A|`
pub fn row_sum_defect(a: &Mat<f64>) -> f64 {
    let ones = vec![1.0; a.ncols()];
    norm_inf(&dense_apply(a, &ones)) / dense_max_abs(a).max(f64::MIN_POSITIVE)
}

/// How the coarse right-hand side is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    /// `g_k = (g, ψ_k)`
    #[default]
    Galerkin,
    /// Matrix continua receive the block integral of `g` (mean-scaled to the
    /// DOF normalization); fracture continua receive nothing.
    BlockIntegral,
}

/// Coarse right-hand side from the fine load vector (`Galerkin`) or from the
/// cellwise source (`BlockIntegral`).
#[allow(clippy::too_many_arguments)]
pub fn coarse_rhs(
    mode: RhsMode,
    mesh: &FineMesh,
    coarse: &CoarseGrid,
    continua: &ContinuumIndex,
    scaling: DofScaling,
    set: &BasisSet,
    load: &[f64],
    source_cells: &[f64],
) -> Result<Vec<f64>> {
    match mode {
        RhsMode::Galerkin => set.project(mesh, load),
        RhsMode::BlockIntegral => {
            if source_cells.len() != mesh.n_cells() {
                return Err(NlmcError::Dimension { expected: mesh.n_cells(), found: source_cells.len() });
            }
            let area = mesh.h * mesh.h;
            let mut g = vec![0.0; continua.len()];
            for b in 0..coarse.n_blocks() {
                let total: f64 = coarse.block_cells(mesh, b).into_iter().map(|c| source_cells[c] * area).sum();
                g[continua.index(b, 0)] = match scaling {
                    DofScaling::Average => total,
                    DofScaling::Integral => total / coarse.block_area(),
                };
            }
            Ok(g)
        }
    }
}

/// Gauge weights `w` with `wᵀ ū = ∫ u` for averaged fine fields: block areas on
/// matrix continua (or 1 under integral scaling) and zero on fracture continua.
pub fn coarse_gauge(continua: &ContinuumIndex, constraints: &ConstraintMatrix, scaling: DofScaling) -> Vec<f64> {
    continua
        .iter()
        .enumerate()
        .map(|(k, c)| match (c.is_matrix(), scaling) {
            (false, _) => 0.0,
            (true, DofScaling::Average) => constraints.measure(k),
            (true, DofScaling::Integral) => 1.0,
        })
        .collect()
}

/// Coarse DOFs of an averaged fine field under the given normalization.
pub fn averaged(u_fine: &[f64], constraints: &ConstraintMatrix, scaling: DofScaling) -> Result<Vec<f64>> {
    if u_fine.len() != constraints.n_nodes() {
        return Err(NlmcError::Dimension { expected: constraints.n_nodes(), found: u_fine.len() });
    }
    Ok(constraints.apply_scaled(u_fine, scaling))
}

/// Solves the singular system `A_T u = g` under `wᵀ u = 0`.
pub fn solve_upscaled_steady(a_t: &Mat<f64>, g: &[f64], gauge: &[f64], tolerance: f64) -> Result<Vec<f64>> {
    let n = a_t.nrows();
    if g.len() != n {
        return Err(NlmcError::Dimension { expected: n, found: g.len() });
    }
    let l1: f64 = g.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let total: f64 = g.iter().sum();
    if total.abs() > tolerance * l1 {
        return Err(NlmcError::IncompatibleSource { imbalance: total, tolerance: tolerance * l1 });
    }
    let u = solve_gauged_dense(a_t, g, gauge)?;
    // A_T has zero row sums, so the gauge multiplier is Σg / Σw and absorbs the imbalance.
    let wsum: f64 = gauge.iter().sum();
    let lambda = if wsum != 0.0 { total / wsum } else { 0.0 };
    let au = dense_apply(a_t, &u);
    let res: Vec<f64> = au.iter().zip(g).zip(gauge).map(|((a, b), w)| a + lambda * w - b).collect();
    let rel = norm2(&res) / norm2(g);
    if rel > tolerance {
        return Err(NlmcError::Residual { what: "coarse steady solve".into(), residual: rel, tolerance });
    }
    Ok(u)
}

/// Backward Euler on the coarse system: `(M_T + dt A_T) uⁿ = dt g + M_T uⁿ⁻¹`.
pub struct CoarseTransient {
    mass: Mat<f64>,
    system: DenseSpd,
    dt: f64,
}

impl CoarseTransient {
    pub fn new(a_t: &Mat<f64>, m_t: &Mat<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(NlmcError::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if a_t.nrows() != m_t.nrows() {
            return Err(NlmcError::Dimension { expected: a_t.nrows(), found: m_t.nrows() });
        }
        let sys = Mat::from_fn(a_t.nrows(), a_t.ncols(), |i, j| m_t[(i, j)] + dt * 0.5 * (a_t[(i, j)] + a_t[(j, i)]));
        Ok(Self { mass: m_t.to_owned(), system: DenseSpd::new(&sys, "coarse backward-Euler matrix M_T + dt A_T")?, dt })
    }

    pub fn step(&self, u_prev: &[f64], g: &[f64]) -> Vec<f64> {
        let mut rhs = dense_apply(&self.mass, u_prev);
        for (r, b) in rhs.iter_mut().zip(g) {
            *r += self.dt * b;
        }
        self.system.solve(&rhs)
    }
}

/// Step indices of `times` on a uniform grid of width `dt`.
pub fn report_steps(dt: f64, t_end: f64, times: &[f64]) -> Result<(usize, Vec<usize>)> {
    let to_step = |t: f64| -> Result<usize> {
        let s = (t / dt).round();
        if s < 0.0 || (s * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(NlmcError::InvalidArgument(format!("time {t} is not a multiple of dt = {dt}")));
        }
        Ok(s as usize)
    };
    let total = to_step(t_end)?;
    let steps = times.iter().map(|&t| to_step(t)).collect::<Result<Vec<_>>>()?;
    if let Some(&s) = steps.iter().find(|&&s| s > total) {
        return Err(NlmcError::InvalidArgument(format!("report step {s} beyond final step {total}")));
    }
    Ok((total, steps))
}

/// Runs backward Euler from `u0` and returns the states at `report_times`.
pub fn solve_transient(
    a_t: &Mat<f64>,
    m_t: &Mat<f64>,
    g: &[f64],
    dt: f64,
    t_end: f64,
    u0: &[f64],
    report_times: &[f64],
) -> Result<Vec<(f64, Vec<f64>)>> {
    let (total, steps) = report_steps(dt, t_end, report_times)?;
    let stepper = CoarseTransient::new(a_t, m_t, dt)?;
    let mut u = u0.to_vec();
    let mut out = Vec::with_capacity(steps.len());
    for (&t, &s) in report_times.iter().zip(&steps) {
        if s == 0 {
            out.push((t, u.clone()));
        }
    }
    for n in 1..=total {
        u = stepper.step(&u, g);
        for (&t, &s) in report_times.iter().zip(&steps) {
            if s == n {
                out.push((t, u.clone()));
            }
        }
    }
    Ok(out)
}

/// Relative errors in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `‖u_T − ū‖₂ / ‖ū‖₂ · 100`
    pub total_pct: f64,
    pub matrix_pct: f64,
    pub fracture_pct: f64,
    /// Same ratio in the norm weighted by continuum measures.
    pub weighted_pct: f64,
}

fn rel_pct(u: &[f64], r: &[f64], w: impl Fn(usize) -> f64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, (a, b)) in u.iter().zip(r).enumerate() {
        let wk = w(k);
        num += wk * (a - b) * (a - b);
        den += wk * b * b;
    }
    if den == 0.0 {
        return if num == 0.0 { Some(0.0) } else { None };
    }
    Some(100.0 * (num / den).sqrt())
}

pub fn error_report(u_t: &[f64], u_bar: &[f64], continua: &ContinuumIndex, measures: &[f64]) -> Result<ErrorReport> {
    let n = continua.len();
    for len in [u_t.len(), u_bar.len(), measures.len()] {
        if len != n {
            return Err(NlmcError::Dimension { expected: n, found: len });
        }
    }
    if norm2(u_bar) == 0.0 {
        return Err(NlmcError::ZeroReference);
    }
    let mask = &continua.matrix_mask();
    let on = |want: bool| move |k: usize| if mask[k] == want { 1.0 } else { 0.0 };
    Ok(ErrorReport {
        total_pct: rel_pct(u_t, u_bar, |_| 1.0).ok_or(NlmcError::ZeroReference)?,
        matrix_pct: rel_pct(u_t, u_bar, on(true)).unwrap_or(f64::INFINITY),
        fracture_pct: rel_pct(u_t, u_bar, on(false)).unwrap_or(f64::INFINITY),
        weighted_pct: rel_pct(u_t, u_bar, |k| measures[k]).unwrap_or(f64::INFINITY),
    })
}
