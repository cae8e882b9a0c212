//! Simplicial sparse Cholesky factorization `P (A + sI) Pᵀ = L Lᵀ`.
//!
//! The factorization is split in two phases. [`CholFactor::analyze`] looks at
//! the nonzero pattern only: it picks the fill-reducing permutation, builds the
//! elimination tree and lays out the complete pattern of `L`. The numeric
//! phase, [`CholFactor::update`], fills in values row by row (up-looking) and
//! never touches the pattern, so a factor analyzed once can be refreshed for
//! any number of new matrices with the same (or a smaller) pattern.

use nalgebra::DMatrix;

use super::csc::SparseCsc;
use super::ordering::{minimum_degree, Ordering};
use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot `d <= PIVOT_TOL * max|A + sI|` fails.
pub const PIVOT_TOL: f64 = 1e-14;

/// Which of the four elementary solves to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// `x = P b`
    P,
    /// `x = L⁻¹ b`
    L,
    /// `x = L⁻ᵀ b`
    Lt,
    /// `x = Pᵀ b`
    Pt,
}

#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// Lower-triangular pattern of the analyzed input `A`.
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<usize>,
    /// Position in `c_values` for each entry of the analyzed `A` pattern.
    a_to_c: Vec<usize>,
    /// Upper triangle of `C = P A Pᵀ`, CSC.
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    c_values: Vec<f64>,
    /// Rows of `L` (off-diagonal part), CSR: column index and value slot in `l`.
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_slots: Vec<usize>,
    l: SparseCsc,
    work: Vec<f64>,
    factorized: bool,
}

impl CholFactor {
    /// Symbolic analysis of a symmetric pattern given by its lower triangle.
    pub fn analyze(pattern: &SparseCsc, ordering: &Ordering) -> Result<Self> {
        let n = pattern.nrows();
        if pattern.ncols() != n {
            return Err(Error::Dimension(format!("Cholesky needs a square matrix, got {}x{}", n, pattern.ncols())));
        }
        let lower = pattern.lower_triangle();
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::MinimumDegree => minimum_degree(&lower),
            Ordering::Given(p) => {
                let mut seen = vec![false; n];
                if p.len() != n || p.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                    return Err(Error::Dimension("ordering is not a permutation".into()));
                }
                p.clone()
            }
        };
        let mut pinv = vec![0usize; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }

        // upper triangle of C = P A P^T, with a map back from A's entries
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(lower.nnz());
        for j in 0..n {
            for (k, &i) in lower.col_rows(j).iter().enumerate() {
                let (pi, pj) = (pinv[i], pinv[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                entries.push((c, r, lower.col_ptr()[j] + k));
            }
        }
        entries.sort_unstable();
        let mut c_col_ptr = vec![0usize; n + 1];
        let mut c_row_idx = Vec::with_capacity(entries.len());
        let mut a_to_c = vec![0usize; entries.len()];
        for (slot, &(c, r, a_pos)) in entries.iter().enumerate() {
            c_col_ptr[c + 1] += 1;
            c_row_idx.push(r);
            a_to_c[a_pos] = slot;
        }
        for j in 0..n {
            c_col_ptr[j + 1] += c_col_ptr[j];
        }
        // every diagonal must be present so the identity shift has somewhere to go
        let mut has_diag = vec![false; n];
        for j in 0..n {
            if c_row_idx[c_col_ptr[j]..c_col_ptr[j + 1]].last() == Some(&j) {
                has_diag[j] = true;
            }
        }
        let (c_col_ptr, c_row_idx, a_to_c) = if has_diag.iter().all(|&d| d) {
            (c_col_ptr, c_row_idx, a_to_c)
        } else {
            insert_missing_diagonal(n, &c_col_ptr, &c_row_idx, &a_to_c, &has_diag)
        };

        let parent = etree_upper(n, &c_col_ptr, &c_row_idx);

        // row patterns of L via elimination-tree reach
        let mut flag = vec![usize::MAX; n];
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut row_cols: Vec<usize> = Vec::new();
        let mut col_counts = vec![1usize; n];
        row_ptr.push(0);
        for k in 0..n {
            flag[k] = k;
            let start = row_cols.len();
            for &i0 in &c_row_idx[c_col_ptr[k]..c_col_ptr[k + 1]] {
                let mut i = i0;
                while i < k && flag[i] != k {
                    flag[i] = k;
                    row_cols.push(i);
                    i = match parent[i] {
                        Some(p) => p,
                        None => break,
                    };
                }
            }
            row_cols[start..].sort_unstable();
            for &j in &row_cols[start..] {
                col_counts[j] += 1;
            }
            row_ptr.push(row_cols.len());
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + col_counts[j];
        }
        let nnz = l_col_ptr[n];
        let mut l_row_idx = vec![0usize; nnz];
        let mut cursor: Vec<usize> = l_col_ptr[..n].to_vec();
        let mut row_slots = vec![0usize; row_cols.len()];
        for j in 0..n {
            l_row_idx[cursor[j]] = j;
            cursor[j] += 1;
        }
        for k in 0..n {
            for idx in row_ptr[k]..row_ptr[k + 1] {
                let j = row_cols[idx];
                let slot = cursor[j];
                l_row_idx[slot] = k;
                row_slots[idx] = slot;
                cursor[j] += 1;
            }
        }
        let c_nnz = c_row_idx.len();
        let l = SparseCsc::from_parts_unchecked(n, n, l_col_ptr, l_row_idx, vec![0.0; nnz]);
        Ok(Self {
            n,
            perm,
            pinv,
            parent,
            a_col_ptr: lower.col_ptr().to_vec(),
            a_row_idx: lower.row_idx().to_vec(),
            a_to_c,
            c_col_ptr,
            c_row_idx,
            c_values: vec![0.0; c_nnz],
            row_ptr,
            row_cols,
            row_slots,
            l,
            work: vec![0.0; n],
            factorized: false,
        })
    }

    /// Analyze and factor in one call.
    pub fn factorize(a: &SparseCsc, shift: f64, ordering: &Ordering) -> Result<Self> {
        let mut f = Self::analyze(a, ordering)?;
        f.update(a, shift)?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn elimination_tree(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// The factor `L` (lower triangular, permuted ordering).
    pub fn l(&self) -> &SparseCsc {
        &self.l
    }

    pub fn is_factorized(&self) -> bool {
        self.factorized
    }

    /// Numeric phase: factor `P (A + shift·I) Pᵀ`, where `A` is given by its
    /// lower triangle and its pattern is contained in the analyzed one.
    pub fn update(&mut self, a: &SparseCsc, shift: f64) -> Result<()> {
        self.factorized = false;
        if a.nrows() != self.n || a.ncols() != self.n {
            return Err(Error::Dimension(format!(
                "update with {}x{} matrix on a factor of order {}",
                a.nrows(),
                a.ncols(),
                self.n
            )));
        }
        if !(shift >= 0.0) {
            return Err(Error::Dimension(format!("negative shift {shift}")));
        }
        self.c_values.iter_mut().for_each(|v| *v = 0.0);
        let same = a.col_ptr() == self.a_col_ptr.as_slice() && a.row_idx() == self.a_row_idx.as_slice();
        if same {
            for (pos, &v) in a.values().iter().enumerate() {
                self.c_values[self.a_to_c[pos]] += v;
            }
        } else {
            for j in 0..self.n {
                for (i, v) in a.col_iter(j) {
                    if i < j {
                        continue;
                    }
                    let col = &self.a_row_idx[self.a_col_ptr[j]..self.a_col_ptr[j + 1]];
                    let k = col
                        .binary_search(&i)
                        .map_err(|_| Error::Dimension(format!("entry ({i}, {j}) is outside the analyzed pattern")))?;
                    self.c_values[self.a_to_c[self.a_col_ptr[j] + k]] += v;
                }
            }
        }
        let mut max_abs = 0.0_f64;
        for j in 0..self.n {
            let end = self.c_col_ptr[j + 1];
            // the diagonal is the last entry of each upper column
            self.c_values[end - 1] += shift;
            for &v in &self.c_values[self.c_col_ptr[j]..end] {
                max_abs = max_abs.max(v.abs());
            }
        }
        let tol = PIVOT_TOL * max_abs;

        let x = &mut self.work;
        let l_col_ptr = self.l.col_ptr().to_vec();
        let (l_rows, l_vals) = self.l.rows_and_values_mut();
        for k in 0..self.n {
            for p in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
                x[self.c_row_idx[p]] = self.c_values[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for idx in self.row_ptr[k]..self.row_ptr[k + 1] {
                let i = self.row_cols[idx];
                let slot = self.row_slots[idx];
                let lki = x[i] / l_vals[l_col_ptr[i]];
                x[i] = 0.0;
                // entries of column i strictly between the diagonal and row k
                for p in (l_col_ptr[i] + 1)..slot {
                    x[l_rows[p]] -= l_vals[p] * lki;
                }
                d -= lki * lki;
                l_vals[slot] = lki;
            }
            if !(d > tol) {
                x.iter_mut().for_each(|v| *v = 0.0);
                return Err(Error::NotPositiveDefinite { column: self.perm[k], pivot: d });
            }
            l_vals[l_col_ptr[k]] = d.sqrt();
        }
        self.factorized = true;
        Ok(())
    }

    fn ensure_factorized(&self) -> Result<()> {
        if self.factorized {
            Ok(())
        } else {
            Err(Error::Pls("factor has no valid numeric values".into()))
        }
    }

    /// Applies one elementary solve to `b` in place.
    pub fn solve_in_place(&self, mode: SolveMode, b: &mut [f64]) -> Result<()> {
        self.ensure_factorized()?;
        if b.len() != self.n {
            return Err(Error::Dimension(format!("right-hand side of length {} for order {}", b.len(), self.n)));
        }
        let l = &self.l;
        match mode {
            SolveMode::P => {
                let src = b.to_vec();
                for (k, &i) in self.perm.iter().enumerate() {
                    b[k] = src[i];
                }
            }
            SolveMode::Pt => {
                let src = b.to_vec();
                for (k, &i) in self.perm.iter().enumerate() {
                    b[i] = src[k];
                }
            }
            SolveMode::L => {
                for j in 0..self.n {
                    let rows = l.col_rows(j);
                    let vals = l.col_values(j);
                    b[j] /= vals[0];
                    let bj = b[j];
                    if bj != 0.0 {
                        for (r, v) in rows[1..].iter().zip(&vals[1..]) {
                            b[*r] -= v * bj;
                        }
                    }
                }
            }
            SolveMode::Lt => {
                for j in (0..self.n).rev() {
                    let rows = l.col_rows(j);
                    let vals = l.col_values(j);
                    let mut s = b[j];
                    for (r, v) in rows[1..].iter().zip(&vals[1..]) {
                        s -= v * b[*r];
                    }
                    b[j] = s / vals[0];
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, mode: SolveMode, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(mode, &mut x)?;
        Ok(x)
    }

    /// Applies one elementary solve to every column of a dense matrix.
    pub fn solve_dense(&self, mode: SolveMode, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            self.solve_in_place(mode, col.as_mut_slice())?;
        }
        Ok(out)
    }

    /// `(A + sI)⁻¹ b` via `Pᵀ L⁻ᵀ L⁻¹ P b`.
    pub fn solve_full(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        for mode in [SolveMode::P, SolveMode::L, SolveMode::Lt, SolveMode::Pt] {
            self.solve_in_place(mode, &mut x)?;
        }
        Ok(x)
    }

    /// `log |L|² = 2 Σ log L(k,k)`.
    pub fn logdet2(&self) -> Result<f64> {
        self.ensure_factorized()?;
        Ok(2.0 * (0..self.n).map(|j| self.l.values()[self.l.col_ptr()[j]].ln()).sum::<f64>())
    }

    /// Original-index permutation inverse: `pinv[i]` is the position of `i`.
    pub fn pinv(&self) -> &[usize] {
        &self.pinv
    }
}

/// Elimination tree of a symmetric matrix given by its upper triangle.
fn etree_upper(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<Option<usize>> {
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for &i0 in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
            let mut i = i0;
            while i < k {
                let next = ancestor[i];
                ancestor[i] = Some(k);
                match next {
                    None => {
                        parent[i] = Some(k);
                        break;
                    }
                    Some(nx) if nx == k => break,
                    Some(nx) => i = nx,
                }
            }
        }
    }
    parent
}

fn insert_missing_diagonal(
    n: usize,
    col_ptr: &[usize],
    row_idx: &[usize],
    a_to_c: &[usize],
    has_diag: &[bool],
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut new_ptr = vec![0usize; n + 1];
    let mut new_rows = Vec::with_capacity(row_idx.len() + n);
    let mut old_to_new = vec![0usize; row_idx.len()];
    for j in 0..n {
        for p in col_ptr[j]..col_ptr[j + 1] {
            old_to_new[p] = new_rows.len();
            new_rows.push(row_idx[p]);
        }
        if !has_diag[j] {
            new_rows.push(j);
        }
        new_ptr[j + 1] = new_rows.len();
    }
    let map = a_to_c.iter().map(|&p| old_to_new[p]).collect();
    (new_ptr, new_rows, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_lower(m: &DMatrix<f64>) -> SparseCsc {
        let n = m.nrows();
        let mut trip = Vec::new();
        for j in 0..n {
            for i in j..n {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        SparseCsc::from_triplets(n, n, &trip).unwrap()
    }

    #[test]
    fn diagonal_pattern_has_no_fill() {
        let a = SparseCsc::identity(5);
        let f = CholFactor::analyze(&a, &Ordering::Natural).unwrap();
        assert_eq!(f.l().nnz(), 5);
        assert!(f.elimination_tree().iter().all(|p| p.is_none()));
    }

    #[test]
    fn arrow_matrix_fills_last_row_only() {
        // dense last row and column, natural order: L keeps the arrow, no extra fill
        let n = 5;
        let mut trip: Vec<_> = (0..n).map(|i| (i, i, 10.0)).collect();
        for j in 0..n - 1 {
            trip.push((n - 1, j, 1.0));
        }
        let a = SparseCsc::from_triplets(n, n, &trip).unwrap();
        let f = CholFactor::analyze(&a, &Ordering::Natural).unwrap();
        for j in 0..n - 1 {
            assert_eq!(f.l().col_rows(j), &[j, n - 1]);
        }
        assert_eq!(f.l().nnz(), 2 * n - 1);
        // reversed arrow (dense first row/col) fills everything
        let rev: Vec<usize> = (0..n).rev().collect();
        let f = CholFactor::analyze(&a, &Ordering::Given(rev)).unwrap();
        assert_eq!(f.l().nnz(), n * (n + 1) / 2);
        // minimum degree recovers the no-fill order
        let f = CholFactor::analyze(&a, &Ordering::MinimumDegree).unwrap();
        assert_eq!(f.l().nnz(), 2 * n - 1);
    }

    #[test]
    fn zero_matrix_with_unit_shift_gives_identity() {
        let a = SparseCsc::from_triplets(3, 3, &[(0, 0, 0.0), (1, 0, 0.0), (1, 1, 0.0), (2, 2, 0.0)]).unwrap();
        let f = CholFactor::factorize(&a, 1.0, &Ordering::Natural).unwrap();
        assert_eq!(f.l().to_dense(), DMatrix::identity(3, 3));
        assert_eq!(f.logdet2().unwrap(), 0.0);
    }

    #[test]
    fn singular_without_shift_reports_pivot() {
        let a = SparseCsc::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let err = CholFactor::factorize(&a, 0.0, &Ordering::Natural).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { column: 1, .. }));
    }

    #[test]
    fn logdet_of_diagonal_factor() {
        let a = SparseCsc::from_triplets(2, 2, &[(0, 0, 4.0), (1, 1, 9.0)]).unwrap();
        let f = CholFactor::factorize(&a, 0.0, &Ordering::Natural).unwrap();
        let expect = 2.0 * (2.0_f64.ln() + 3.0_f64.ln());
        assert!((f.logdet2().unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn permutation_round_trip() {
        let a = dense_lower(&DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]));
        let f = CholFactor::factorize(&a, 0.0, &Ordering::Given(vec![2, 0, 1])).unwrap();
        let b = [1.0, 2.0, 3.0];
        let pb = f.solve(SolveMode::P, &b).unwrap();
        assert_eq!(pb, vec![3.0, 1.0, 2.0]);
        assert_eq!(f.solve(SolveMode::Pt, &pb).unwrap(), b.to_vec());
    }

    #[test]
    fn identity_factor_leaves_rhs_alone() {
        let f = CholFactor::factorize(&SparseCsc::identity(4), 0.0, &Ordering::Natural).unwrap();
        let b = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(f.solve(SolveMode::L, &b).unwrap(), b.to_vec());
        assert_eq!(f.solve(SolveMode::Lt, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn unfactorized_solve_is_an_error() {
        let f = CholFactor::analyze(&SparseCsc::identity(2), &Ordering::Natural).unwrap();
        assert!(f.solve(SolveMode::L, &[1.0, 1.0]).is_err());
        assert!(f.logdet2().is_err());
    }

    #[test]
    fn update_outside_pattern_is_rejected() {
        let mut f = CholFactor::analyze(&SparseCsc::identity(2), &Ordering::Natural).unwrap();
        let a = SparseCsc::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 0.5), (1, 1, 1.0)]).unwrap();
        assert!(matches!(f.update(&a, 0.0), Err(Error::Dimension(_))));
    }
}
