//! Sparse and dense linear-algebra helpers shared by the fine and coarse solvers.
//!
//! Everything here is a thin layer over `faer`: compressed-column storage for
//! the fine operators, a regularized sparse LDLᵀ for the symmetric indefinite
//! saddle-point systems that appear in every constrained solve, and dense
//! factorizations for the coarse systems and the local eigenproblems.

use std::collections::HashMap;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};

use crate::error::{NlmcError, Result};

pub type Sparse = SparseColMat<usize, f64>;

/// Square sparse operator in compressed-column storage.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    mat: Sparse,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds the operator from (row, col, value) entries; duplicates are summed.
    pub fn from_triplets(dim: usize, entries: &[(usize, usize, f64)], symmetric: bool) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> =
            entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = Sparse::try_new_from_triplets(dim, dim, &trip)
            .map_err(|e| NlmcError::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;
        Ok(Self { mat, symmetric })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nnz(&self) -> usize {
        self.mat.val().len()
    }

    pub fn as_faer(&self) -> &Sparse {
        &self.mat
    }

    /// Iterates the stored entries of column `col` as (row, value).
    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.mat.col_range(col);
        let rows = &self.mat.row_idx()[range.clone()];
        let vals = &self.mat.val()[range];
        rows.iter().copied().zip(vals.iter().copied())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        y.iter_mut().for_each(|v| *v = 0.0);
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (r, v) in self.column(c) {
                y[r] += v * xc;
            }
        }
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        dot(x, &ay)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.column(col).filter(|&(r, _)| r == row).map(|(_, v)| v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.val().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|`
    /// Largest absolute row sum (the ∞-norm).
    pub fn abs_row_sum_max(&self) -> f64 {
        let mut sums = vec![0.0; self.dim()];
        for col in 0..self.dim() {
            for (row, v) in self.column(col) {
                sums[row] += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut defect = 0.0_f64;
        for c in 0..self.dim() {
            for (r, v) in self.column(c) {
                defect = defect.max((v - self.get(c, r)).abs());
            }
        }
        defect
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut d = Mat::<f64>::zeros(n, n);
        for c in 0..n {
            for (r, v) in self.column(c) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Principal submatrix on `dofs`; `local_of[g]` is the position of global
    /// index `g` in `dofs` or `usize::MAX` when `g` is excluded.
    pub fn principal_submatrix(&self, dofs: &[usize], local_of: &[usize]) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(dofs.len() * 9);
        for (lc, &gc) in dofs.iter().enumerate() {
            for (gr, v) in self.column(gc) {
                let lr = local_of[gr];
                if lr != usize::MAX {
                    out.push((lr, lc, v));
                }
            }
        }
        out
    }

    /// `self + alpha * other`, both on the same index set.
    pub fn add_scaled(&self, alpha: f64, other: &SparseOperator) -> Result<SparseOperator> {
        if self.dim() != other.dim() {
            return Err(NlmcError::Dimension { expected: self.dim(), found: other.dim() });
        }
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        for c in 0..self.dim() {
            entries.extend(self.column(c).map(|(r, v)| (r, c, v)));
            entries.extend(other.column(c).map(|(r, v)| (r, c, alpha * v)));
        }
        SparseOperator::from_triplets(self.dim(), &entries, self.symmetric && other.symmetric)
    }
}

/// A sparse row vector (a linear functional on fine nodes).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    /// Builds a row from possibly repeated (index, weight) pairs, merging duplicates
    /// and sorting by index.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut row = SparseRow::default();
        for (i, v) in pairs {
            match row.idx.last() {
                Some(&last) if last == i => *row.val.last_mut().unwrap() += v,
                _ => {
                    row.idx.push(i);
                    row.val.push(v);
                }
            }
        }
        row
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn sum(&self) -> f64 {
        self.val.iter().sum()
    }

    pub fn scaled(&self, s: f64) -> SparseRow {
        SparseRow { idx: self.idx.clone(), val: self.val.iter().map(|v| v * s).collect() }
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Factorized saddle-point system
///
/// ```text
/// [ A  Bᵀ ] [x]   [0]
/// [ B  0  ] [μ] = [c]
/// ```
///
/// with `A` symmetric positive semidefinite and `B` of full row rank on `ker A`.
///
/// The factor is an LDLᵀ of the quasi-definite matrix obtained by putting `-δ I`
/// in the lower-right block, so any fill-reducing symmetric ordering is stable.
/// Solves iterate to the unperturbed system by iterative refinement.
pub struct SaddlePoint {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    full: Sparse,
    n: usize,
    rows: Vec<SparseRow>,
    a: Sparse,
    a_scale: f64,
}

/// Relative size of the multiplier-block regularization.
const SADDLE_REGULARIZATION: f64 = 1e-8;
const MAX_REFINEMENT: usize = 30;

/// Solution of a batch of saddle-point solves, one column per right-hand side.
pub struct SaddleSolution {
    pub primal: Mat<f64>,
    pub multipliers: Mat<f64>,
}

impl SaddlePoint {
    /// `a_entries` are triplets of the n×n block; `rows` are constraint functionals in
    /// local indices. Rows that vanish or duplicate another row are reported as
    /// redundant before any factorization is attempted.
    pub fn factor(n: usize, a_entries: &[(usize, usize, f64)], rows: Vec<SparseRow>) -> Result<Self> {
        let k = rows.len();
        let mut seen: HashMap<(Vec<usize>, Vec<u64>), usize> = HashMap::new();
        for (r, row) in rows.iter().enumerate() {
            if row.val.iter().all(|v| *v == 0.0) {
                return Err(NlmcError::RedundantConstraint {
                    index: r,
                    detail: "constraint has no free degrees of freedom".into(),
                });
            }
            let key = (row.idx.clone(), row.val.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            if let Some(&prev) = seen.get(&key) {
                return Err(NlmcError::RedundantConstraint {
                    index: r,
                    detail: format!("duplicates constraint {prev}"),
                });
            }
            seen.insert(key, r);
        }

        let a_trip: Vec<Triplet<usize, usize, f64>> =
            a_entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = Sparse::try_new_from_triplets(n, n, &a_trip)
            .map_err(|e| NlmcError::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;
        let a_scale = a.val().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

        // Constraint rows are rescaled to the magnitude of A; multipliers are
        // scaled back after the solve.
        let mut trip = a_trip;
        trip.reserve(2 * rows.iter().map(SparseRow::nnz).sum::<usize>());
        for (r, row) in rows.iter().enumerate() {
            let s = a_scale / norm_inf(&row.val);
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                trip.push(Triplet::new(n + r, i, v * s));
                trip.push(Triplet::new(i, n + r, v * s));
            }
        }
        let full = Sparse::try_new_from_triplets(n + k, n + k, &trip)
            .map_err(|e| NlmcError::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;

        let delta = SADDLE_REGULARIZATION * a_scale;
        let mut lower: Vec<Triplet<usize, usize, f64>> = trip.into_iter().filter(|t| t.row >= t.col).collect();
        lower.extend((n..n + k).map(|i| Triplet::new(i, i, -delta)));
        let perturbed = Sparse::try_new_from_triplets(n + k, n + k, &lower)
            .map_err(|e| NlmcError::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;
        let symbolic = factorize_symbolic_cholesky(
            perturbed.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| NlmcError::SingularSystem(format!("symbolic factorization failed: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let signs: Vec<i8> = (0..n + k).map(|i| if i < n { 1 } else { -1 }).collect();
        let regularization = LdltRegularization {
            dynamic_regularization_signs: Some(&signs),
            dynamic_regularization_delta: delta,
            dynamic_regularization_epsilon: 1e-2 * delta,
        };
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                perturbed.as_ref(),
                Side::Lower,
                regularization,
                Par::Seq,
                MemStack::new(&mut buf),
                Default::default(),
            )
            .map_err(|e| NlmcError::SingularSystem(format!("LDLᵀ factorization failed: {e:?}")))?;
        Ok(Self { symbolic, values, full, n, rows, a, a_scale })
    }

    /// Solves `K z = rhs` by refinement on the regularized factor.
    fn refine(&self, rhs: &Mat<f64>) -> Mat<f64> {
        let ldlt = LdltRef::new(&self.symbolic, &self.values);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(rhs.ncols(), Par::Seq));
        let mut z = Mat::<f64>::zeros(rhs.nrows(), rhs.ncols());
        let mut last = f64::INFINITY;
        for _ in 0..MAX_REFINEMENT {
            let mut r = rhs - &self.full * &z;
            let norm = r.norm_max();
            if norm == 0.0 || norm >= 0.5 * last {
                break;
            }
            last = norm;
            ldlt.solve_in_place_with_conj(Conj::No, r.as_mut(), Par::Seq, MemStack::new(&mut buf));
            z += &r;
        }
        z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    /// Solves for every column of `targets` (k × r): `B x = targets[:, j]`.
    /// Fails when the stationarity or constraint residual exceeds `tol`.
    pub fn solve(&self, targets: &Mat<f64>, tol: f64) -> Result<SaddleSolution> {
        self.solve_with_load(None, targets, tol)
    }

    /// As [`SaddlePoint::solve`] with a nonzero first block `A x + Bᵀ μ = load`.
    pub fn solve_with_load(&self, load: Option<&Mat<f64>>, targets: &Mat<f64>, tol: f64) -> Result<SaddleSolution> {
        let (n, k) = (self.n, self.rows.len());
        if targets.nrows() != k {
            return Err(NlmcError::Dimension { expected: k, found: targets.nrows() });
        }
        let r = targets.ncols();
        if let Some(l) = load {
            if l.nrows() != n || l.ncols() != r {
                return Err(NlmcError::Dimension { expected: n, found: l.nrows() });
            }
        }
        let scales: Vec<f64> = self.rows.iter().map(|row| self.a_scale / norm_inf(&row.val)).collect();
        let mut rhs = Mat::<f64>::zeros(n + k, r);
        for j in 0..r {
            if let Some(l) = load {
                for i in 0..n {
                    rhs[(i, j)] = l[(i, j)];
                }
            }
            for c in 0..k {
                rhs[(n + c, j)] = targets[(c, j)] * scales[c];
            }
        }
        let z = self.refine(&rhs);
        let mut primal = Mat::<f64>::zeros(n, r);
        let mut multipliers = Mat::<f64>::zeros(k, r);
        for j in 0..r {
            for i in 0..n {
                primal[(i, j)] = z[(i, j)];
            }
            for c in 0..k {
                multipliers[(c, j)] = z[(n + c, j)] * scales[c];
            }
        }
        if primal.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(NlmcError::SingularSystem("non-finite solution".into()));
        }

        for j in 0..r {
            let x: Vec<f64> = primal.col(j).iter().copied().collect();
            // stationarity: A x + Bᵀ μ = 0
            let mut res = vec![0.0; n];
            let mut scale = vec![0.0; n];
            if let Some(l) = load {
                for i in 0..n {
                    res[i] = -l[(i, j)];
                    scale[i] = l[(i, j)].abs();
                }
            }
            for (c, &xc) in x.iter().enumerate() {
                let range = self.a.col_range(c);
                for (&row, &v) in self.a.row_idx()[range.clone()].iter().zip(&self.a.val()[range]) {
                    res[row] += v * xc;
                    scale[row] += (v * xc).abs();
                }
            }
            for (c, row) in self.rows.iter().enumerate() {
                let mu = multipliers[(c, j)];
                for (&i, &v) in row.idx.iter().zip(&row.val) {
                    res[i] += v * mu;
                    scale[i] += (v * mu).abs();
                }
            }
            let stat_abs = norm_inf(&res) / norm_inf(&scale).max(f64::MIN_POSITIVE);
            if stat_abs > tol {
                return Err(NlmcError::Residual {
                    what: "saddle-point stationarity".into(),
                    residual: stat_abs,
                    tolerance: tol,
                });
            }
            for (c, row) in self.rows.iter().enumerate() {
                let target = targets[(c, j)];
                let cres = (row.dot(&x) - target).abs();
                let cscale = row.val.iter().zip(&row.idx).map(|(v, &i)| (v * x[i]).abs()).sum::<f64>().max(target.abs());
                if cres > tol * cscale.max(1.0) {
                    return Err(NlmcError::Residual {
                        what: format!("constraint {c}"),
                        residual: cres,
                        tolerance: tol,
                    });
                }
            }
        }
        Ok(SaddleSolution { primal, multipliers })
    }
}

/// Dense solve of the singular symmetric system `A u = g` under the gauge `wᵀ u = 0`,
/// via one scalar Lagrange multiplier. Returns `u`.
pub fn solve_gauged_dense(a: &Mat<f64>, g: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if g.len() != n || w.len() != n {
        return Err(NlmcError::Dimension { expected: n, found: g.len().min(w.len()) });
    }
    let wscale = norm_inf(w).max(f64::MIN_POSITIVE);
    let ascale = a.col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).fold(0.0_f64, |m, v| m.max(v.abs()));
    let s = ascale.max(f64::MIN_POSITIVE) / wscale;
    let mut k = Mat::<f64>::zeros(n + 1, n + 1);
    for j in 0..n {
        for i in 0..n {
            k[(i, j)] = a[(i, j)];
        }
        k[(n, j)] = w[j] * s;
        k[(j, n)] = w[j] * s;
    }
    let mut rhs = Mat::<f64>::zeros(n + 1, 1);
    for i in 0..n {
        rhs[(i, 0)] = g[i];
    }
    let lu = k.partial_piv_lu();
    let z = lu.solve(&rhs);
    let u: Vec<f64> = (0..n).map(|i| z[(i, 0)]).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(NlmcError::SingularSystem("gauged coarse system".into()));
    }
    Ok(u)
}

pub fn dense_apply(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (yi, &aij) in y.iter_mut().zip(a.col(j).iter()) {
            *yi += aij * xj;
        }
    }
    y
}

pub fn dense_max_abs(a: &Mat<f64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn dense_symmetry_defect(a: &Mat<f64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..j {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// Ascending eigenvalues of a dense symmetric matrix.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| NlmcError::InvalidArgument(format!("eigensolver failed: {e:?}")))
}

/// Generalized symmetric-definite eigenproblem `A v = λ S v`, ascending λ, with
/// `S`-orthonormal eigenvectors as columns.
pub fn generalized_symmetric_eigen(a: &Mat<f64>, s: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let llt = s
        .llt(Side::Lower)
        .map_err(|_| NlmcError::NotPositiveDefinite("mass-like matrix of the eigenproblem".into()))?;
    let l = llt.L();
    // C = L⁻¹ A L⁻ᵀ
    let mut c = a.to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, ct.as_mut(), Par::Seq);
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (ct[(i, j)] + ct[(j, i)]);
            ct[(i, j)] = avg;
            ct[(j, i)] = avg;
        }
    }
    let evd = ct
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| NlmcError::InvalidArgument(format!("eigensolver failed: {e:?}")))?;
    let vals: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let mut vecs = evd.U().to_owned();
    // v = L⁻ᵀ q
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), vecs.as_mut(), Par::Seq);
    Ok((vals, vecs))
}

/// Dense Cholesky factor used for SPD time-stepping systems.
pub struct DenseSpd {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl DenseSpd {
    pub fn new(a: &Mat<f64>, what: &str) -> Result<Self> {
        let llt = a.llt(Side::Lower).map_err(|_| NlmcError::NotPositiveDefinite(what.to_string()))?;
        Ok(Self { llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::zeros(b.len(), 1);
        for (i, v) in b.iter().enumerate() {
            rhs[(i, 0)] = *v;
        }
        let x = self.llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Sparse Cholesky factor used for the fine SPD time-stepping system.
pub struct SparseSpd {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseSpd {
    pub fn new(a: &SparseOperator, what: &str) -> Result<Self> {
        let llt = a
            .as_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|_| NlmcError::NotPositiveDefinite(what.to_string()))?;
        Ok(Self { llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::zeros(b.len(), 1);
        for (i, v) in b.iter().enumerate() {
            rhs[(i, 0)] = *v;
        }
        let x = self.llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_row_merges_duplicates() {
        let row = SparseRow::from_pairs(vec![(3, 1.0), (1, 2.0), (3, 0.5)]);
        assert_eq!(row.idx, vec![1, 3]);
        assert_eq!(row.val, vec![2.0, 1.5]);
        assert_eq!(row.dot(&[0.0, 1.0, 0.0, 2.0]), 5.0);
    }

    #[test]
    fn saddle_point_minimizes_energy_on_a_path() {
        // 1D Laplacian on 3 interior nodes, single constraint sum(x) = 1.
        let a = vec![
            (0, 0, 2.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
            (2, 2, 2.0),
        ];
        let rows = vec![SparseRow::from_pairs(vec![(0, 1.0), (1, 1.0), (2, 1.0)])];
        let sp = SaddlePoint::factor(3, &a, rows).unwrap();
        let mut t = Mat::<f64>::zeros(1, 1);
        t[(0, 0)] = 1.0;
        let sol = sp.solve(&t, 1e-12).unwrap();
        // A x ∝ 1 with sum 1 -> x = A⁻¹1 / (1ᵀA⁻¹1) = [3,4,3]/10
        let x: Vec<f64> = sol.primal.col(0).iter().copied().collect();
        for (xi, e) in x.iter().zip([0.3, 0.4, 0.3]) {
            assert!((xi - e).abs() < 1e-13, "{x:?}");
        }
    }

    #[test]
    fn duplicate_constraints_are_rejected() {
        let a = vec![(0, 0, 1.0), (1, 1, 1.0)];
        let row = SparseRow::from_pairs(vec![(0, 1.0), (1, 1.0)]);
        let err = SaddlePoint::factor(2, &a, vec![row.clone(), row]).err().unwrap();
        assert!(matches!(err, NlmcError::RedundantConstraint { index: 1, .. }));
    }

    #[test]
    fn generalized_eigen_is_s_orthonormal() {
        let mut a = Mat::<f64>::zeros(3, 3);
        let mut s = Mat::<f64>::zeros(3, 3);
        for i in 0..3 {
            a[(i, i)] = 2.0;
            s[(i, i)] = 1.0 + i as f64;
        }
        a[(0, 1)] = -1.0;
        a[(1, 0)] = -1.0;
        let (vals, vecs) = generalized_symmetric_eigen(&a, &s).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..3 {
            for j in 0..3 {
                let mut sij = 0.0;
                for p in 0..3 {
                    sij += vecs[(p, i)] * s[(p, p)] * vecs[(p, j)];
                }
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((sij - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauged_dense_solve_on_path_laplacian() {
        let mut a = Mat::<f64>::zeros(3, 3);
        let l = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = l[i][j];
            }
        }
        let u = solve_gauged_dense(&a, &[1.0, 0.0, -1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && u[1].abs() < 1e-12 && (u[2] + 1.0).abs() < 1e-12);
    }
}
