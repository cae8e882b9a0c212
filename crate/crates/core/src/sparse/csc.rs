use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed-sparse-column matrix.
///
/// Row indices are strictly increasing within each column. Stored entries are
/// *structural*: an entry whose value happens to be zero is kept, so the pattern
/// of a product never depends on the numbers being multiplied.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCsc {
    nrow: usize,
    ncol: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCsc {
    pub fn new(nrow: usize, ncol: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if col_ptr.len() != ncol + 1 {
            return Err(Error::Dimension(format!("column pointer length {} for {} columns", col_ptr.len(), ncol)));
        }
        if col_ptr[0] != 0 || col_ptr[ncol] != row_idx.len() || row_idx.len() != values.len() {
            return Err(Error::Dimension("column pointers, row indices and values disagree on nnz".into()));
        }
        for j in 0..ncol {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(Error::Dimension(format!("column pointers decrease at {j}")));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (k, &r) in rows.iter().enumerate() {
                if r >= nrow {
                    return Err(Error::Dimension(format!("row index {r} out of range in column {j}")));
                }
                if k > 0 && rows[k - 1] >= r {
                    return Err(Error::Dimension(format!("row indices not strictly increasing in column {j}")));
                }
            }
        }
        Ok(Self { nrow, ncol, col_ptr, row_idx, values })
    }

    pub(crate) fn from_parts_unchecked(
        nrow: usize,
        ncol: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(col_ptr.len(), ncol + 1);
        debug_assert_eq!(row_idx.len(), values.len());
        Self { nrow, ncol, col_ptr, row_idx, values }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrow: usize, ncol: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= nrow || c >= ncol {
                return Err(Error::Dimension(format!("triplet ({r}, {c}) outside {nrow}x{ncol}")));
            }
        }
        sorted.sort_by_key(|t| (t.1, t.0));
        let mut col_ptr = vec![0usize; ncol + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for j in 0..ncol {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self::from_parts_unchecked(nrow, ncol, col_ptr, row_idx, values))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
    }

    pub fn zeros(nrow: usize, ncol: usize) -> Self {
        Self::from_parts_unchecked(nrow, ncol, vec![0; ncol + 1], Vec::new(), Vec::new())
    }

    /// Dense to sparse, keeping only entries that are not exactly zero.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut col_ptr = Vec::with_capacity(m.ncols() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self::from_parts_unchecked(m.nrows(), m.ncols(), col_ptr, row_idx, values)
    }

    pub fn nrows(&self) -> usize {
        self.nrow
    }

    pub fn ncols(&self) -> usize {
        self.ncol
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrow, self.ncol)
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices together with mutable values, for in-place numeric work.
    pub fn rows_and_values_mut(&mut self) -> (&[usize], &mut [f64]) {
        (&self.row_idx, &mut self.values)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn col_rows(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    pub fn col_values(&self, j: usize) -> &[f64] {
        &self.values[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// Iterates `(row, value)` over the stored entries of column `j`.
    pub fn col_iter(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.col_rows(j).iter().copied().zip(self.col_values(j).iter().copied())
    }

    /// Position of entry `(i, j)` in the value array, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.col_ptr[j];
        self.col_rows(j).binary_search(&i).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &SparseCsc) -> bool {
        self.nrow == other.nrow
            && self.ncol == other.ncol
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }

    pub fn transpose(&self) -> SparseCsc {
        let mut counts = vec![0usize; self.nrow + 1];
        for &r in &self.row_idx {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrow {
            counts[i + 1] += counts[i];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.ncol {
            for (r, v) in self.col_iter(j) {
                let dst = next[r];
                row_idx[dst] = j;
                values[dst] = v;
                next[r] += 1;
            }
        }
        SparseCsc::from_parts_unchecked(self.ncol, self.nrow, col_ptr, row_idx, values)
    }

    /// Structural sparse product `self * rhs`.
    pub fn mul_sparse(&self, rhs: &SparseCsc) -> Result<SparseCsc> {
        if self.ncol != rhs.nrow {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrow, self.ncol, rhs.nrow, rhs.ncol
            )));
        }
        let mut col_ptr = Vec::with_capacity(rhs.ncol + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut mark = vec![usize::MAX; self.nrow];
        let mut acc = vec![0.0; self.nrow];
        let mut touched: Vec<usize> = Vec::new();
        col_ptr.push(0);
        for j in 0..rhs.ncol {
            touched.clear();
            for (k, b) in rhs.col_iter(j) {
                for (i, a) in self.col_iter(k) {
                    if mark[i] != j {
                        mark[i] = j;
                        acc[i] = 0.0;
                        touched.push(i);
                    }
                    acc[i] += a * b;
                }
            }
            touched.sort_unstable();
            for &i in &touched {
                row_idx.push(i);
                values.push(acc[i]);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseCsc::from_parts_unchecked(self.nrow, rhs.ncol, col_ptr, row_idx, values))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncol, "mul_vec: dimension mismatch");
        let mut y = vec![0.0; self.nrow];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.col_iter(j) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// `selfᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrow, "tr_mul_vec: dimension mismatch");
        (0..self.ncol).map(|j| self.col_iter(j).map(|(i, v)| v * x[i]).sum()).collect()
    }

    pub fn mul_dense(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.ncol != b.nrows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by dense {}x{}",
                self.nrow,
                self.ncol,
                b.nrows(),
                b.ncols()
            )));
        }
        let mut out = DMatrix::zeros(self.nrow, b.ncols());
        for c in 0..b.ncols() {
            for j in 0..self.ncol {
                let bj = b[(j, c)];
                if bj == 0.0 {
                    continue;
                }
                for (i, v) in self.col_iter(j) {
                    out[(i, c)] += v * bj;
                }
            }
        }
        Ok(out)
    }

    /// Lower triangle (diagonal included) of `selfᵀ self`.
    pub fn crossprod_lower(&self) -> SparseCsc {
        self.transpose().tcrossprod_lower()
    }

    /// Lower triangle (diagonal included) of `self selfᵀ`.
    ///
    /// Accumulated column by column of `self`: each column contributes the
    /// outer product of its entries, so the cost is Σ nnz(col)².
    pub fn tcrossprod_lower(&self) -> SparseCsc {
        let n = self.nrow;
        // column c of the result collects rows i >= c from every column of
        // self that holds both c and i.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for j in 0..self.ncol {
            let rows = self.col_rows(j);
            let vals = self.col_values(j);
            for a in 0..rows.len() {
                for b in a..rows.len() {
                    cols[rows[a]].push((rows[b], vals[a] * vals[b]));
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        col_ptr.push(0);
        for mut entries in cols {
            entries.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (r, v) in entries {
                if r == last {
                    *values.last_mut().expect("entry exists") += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                    last = r;
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseCsc::from_parts_unchecked(n, n, col_ptr, row_idx, values)
    }

    /// Entries on or below the diagonal.
    pub fn lower_triangle(&self) -> SparseCsc {
        let mut col_ptr = Vec::with_capacity(self.ncol + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..self.ncol {
            for (i, v) in self.col_iter(j) {
                if i >= j {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseCsc::from_parts_unchecked(self.nrow, self.ncol, col_ptr, row_idx, values)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrow, self.ncol);
        for j in 0..self.ncol {
            for (i, v) in self.col_iter(j) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Expands a stored lower triangle into the full symmetric dense matrix.
    pub fn symmetric_lower_to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrow, self.ncol);
        for j in 0..self.ncol {
            for (i, v) in self.col_iter(j) {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// MatrixMarket coordinate text with 1-based indices.
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", self.nrow, self.ncol, self.nnz());
        for j in 0..self.ncol {
            for (i, v) in self.col_iter(j) {
                let _ = writeln!(out, "{} {} {:?}", i + 1, j + 1, v);
            }
        }
        out
    }

    pub fn from_matrix_market(text: &str) -> Result<SparseCsc> {
        let bad = |what: &str| Error::Data(format!("MatrixMarket: {what}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('%'));
        let header = lines.next().ok_or_else(|| bad("missing size line"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad size line")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(bad("size line needs three integers"));
        }
        let mut triplets = Vec::with_capacity(dims[2]);
        for line in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 3 {
                return Err(bad("entry line needs three fields"));
            }
            let i: usize = tok[0].parse().map_err(|_| bad("bad row index"))?;
            let j: usize = tok[1].parse().map_err(|_| bad("bad column index"))?;
            let v: f64 = tok[2].parse().map_err(|_| bad("bad value"))?;
            if i == 0 || j == 0 {
                return Err(bad("indices are 1-based"));
            }
            triplets.push((i - 1, j - 1, v));
        }
        if triplets.len() != dims[2] {
            return Err(bad("entry count disagrees with header"));
        }
        SparseCsc::from_triplets(dims[0], dims[1], &triplets)
    }
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&SparseCsc]) -> Result<SparseCsc> {
    let ncol = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != ncol) {
        return Err(Error::Dimension("vstack: column counts differ".into()));
    }
    let nrow: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut col_ptr = Vec::with_capacity(ncol + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    col_ptr.push(0);
    for j in 0..ncol {
        let mut offset = 0;
        for b in blocks {
            for (i, v) in b.col_iter(j) {
                row_idx.push(i + offset);
                values.push(v);
            }
            offset += b.nrows();
        }
        col_ptr.push(row_idx.len());
    }
    Ok(SparseCsc::from_parts_unchecked(nrow, ncol, col_ptr, row_idx, values))
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[&SparseCsc]) -> SparseCsc {
    let nrow: usize = blocks.iter().map(|b| b.nrows()).sum();
    let ncol: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut col_ptr = Vec::with_capacity(ncol + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    col_ptr.push(0);
    let mut row_off = 0;
    for b in blocks {
        for j in 0..b.ncols() {
            for (i, v) in b.col_iter(j) {
                row_idx.push(i + row_off);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        row_off += b.nrows();
    }
    SparseCsc::from_parts_unchecked(nrow, ncol, col_ptr, row_idx, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indicator_t() -> SparseCsc {
        // transpose of the indicator matrix for factor (1,1,2,2,3,3)
        let f = [0usize, 0, 1, 1, 2, 2];
        let trip: Vec<_> = f.iter().enumerate().map(|(j, &i)| (i, j, 1.0)).collect();
        SparseCsc::from_triplets(3, 6, &trip).unwrap()
    }

    #[test]
    fn indicator_times_transpose_is_diag_two() {
        let jt = indicator_t();
        let prod = jt.mul_sparse(&jt.transpose()).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0, 2.0]));
        assert_eq!(prod.to_dense(), expected);
        assert_eq!(jt.tcrossprod_lower().to_dense(), expected);
    }

    #[test]
    fn multiply_by_identity() {
        let jt = indicator_t();
        assert_eq!(jt.mul_sparse(&SparseCsc::identity(6)).unwrap(), jt);
        let one = SparseCsc::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap();
        let three = SparseCsc::from_triplets(1, 1, &[(0, 0, 3.0)]).unwrap();
        assert_eq!(one.mul_sparse(&three).unwrap().values(), &[6.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let jt = indicator_t();
        assert!(matches!(jt.mul_sparse(&jt), Err(Error::Dimension(_))));
        assert!(SparseCsc::new(2, 1, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseCsc::new(2, 1, vec![0, 1], vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn crossprod_matches_dense() {
        let a = SparseCsc::from_triplets(
            4,
            3,
            &[(0, 0, 1.0), (2, 0, -2.0), (1, 1, 3.0), (2, 2, 0.5), (3, 2, 4.0), (0, 2, 1.5)],
        )
        .unwrap();
        let d = a.to_dense();
        let expect = d.transpose() * &d;
        let got = a.crossprod_lower().symmetric_lower_to_dense();
        assert!((expect - got).amax() < 1e-14);
        let expect_t = &d * d.transpose();
        let got_t = a.tcrossprod_lower().symmetric_lower_to_dense();
        assert!((expect_t - got_t).amax() < 1e-14);
    }

    #[test]
    fn explicit_zeros_stay_structural() {
        let a = SparseCsc::from_triplets(2, 2, &[(0, 0, 0.0), (1, 1, 2.0)]).unwrap();
        let p = a.mul_sparse(&a).unwrap();
        assert_eq!(p.nnz(), 2);
    }

    #[test]
    fn matrix_market_text_is_one_based() {
        let a = SparseCsc::from_triplets(2, 2, &[(1, 0, 2.5), (0, 1, -1.0)]).unwrap();
        let text = a.to_matrix_market();
        assert_eq!(text, "%%MatrixMarket matrix coordinate real general\n2 2 2\n2 1 2.5\n1 2 -1.0\n");
        assert_eq!(SparseCsc::from_matrix_market(&text).unwrap(), a);
    }

    #[test]
    fn stacking_and_block_diagonal() {
        let a = SparseCsc::identity(2);
        let b = SparseCsc::from_triplets(1, 2, &[(0, 1, 5.0)]).unwrap();
        let s = vstack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), (3, 2));
        assert_eq!(s.get(2, 1), 5.0);
        let d = block_diag(&[&a, &b]);
        assert_eq!(d.shape(), (3, 4));
        assert_eq!(d.get(2, 3), 5.0);
    }
}
