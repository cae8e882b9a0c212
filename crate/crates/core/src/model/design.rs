//! Fixed- and random-effects design matrices.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::data::{Column, DataTable};
use crate::error::{Error, Result};
use crate::formula::Interaction;
use crate::sparse::SparseCsc;

/// Levels of every categorical covariate, fixed at fit time so new data can
/// be coded the same way.
pub type LevelMap = BTreeMap<String, Vec<String>>;

/// Dense model matrix with column names and, per non-intercept term, its column range.
#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub names: Vec<String>,
    pub terms: Vec<(String, std::ops::Range<usize>)>,
}

/// Columns contributed by a single variable: a block of values plus labels.
fn variable_block(name: &str, data: &DataTable, levels: &LevelMap, full: bool) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let col = data.column(name)?;
    let n = data.nrows();
    if let Some(lv) = levels.get(name) {
        let codes = level_codes(name, col, lv)?;
        let start = usize::from(!full);
        let cols = (start..lv.len()).map(|k| codes.iter().map(|&c| if c == k { 1.0 } else { 0.0 }).collect()).collect();
        let labels = lv[start..].iter().map(|l| format!("{name}{l}")).collect();
        return Ok((cols, labels));
    }
    match col {
        Column::Numeric(v) => {
            let vals: Result<Vec<f64>> = (0..n)
                .map(|i| v[i].ok_or_else(|| Error::Data(format!("column '{name}' is NA at row {}", i + 1))))
                .collect();
            Ok((vec![vals?], vec![name.to_string()]))
        }
        Column::Categorical { .. } => Err(Error::Data(format!("no level set recorded for factor '{name}'"))),
    }
}

/// Maps each row's label onto a fixed level list; unknown labels are an error.
pub fn level_codes(name: &str, col: &Column, levels: &[String]) -> Result<Vec<usize>> {
    let index: std::collections::HashMap<&str, usize> =
        levels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    (0..col.len())
        .map(|i| {
            let label = col.label(i).ok_or_else(|| Error::Data(format!("column '{name}' is NA at row {}", i + 1)))?;
            index.get(label.as_str()).copied().ok_or_else(|| {
                Error::Data(format!("level '{label}' of '{name}' was not present when the model was built"))
            })
        })
        .collect()
}

/// Records the levels of every categorical variable used by `terms`.
pub fn collect_levels<'a>(
    names: impl IntoIterator<Item = &'a String>,
    data: &DataTable,
    into: &mut LevelMap,
) -> Result<()> {
    for name in names {
        if let Column::Categorical { levels, .. } = data.column(name)? {
            into.entry(name.clone()).or_insert_with(|| levels.clone());
        }
    }
    Ok(())
}

/// Builds a model matrix with treatment coding. Without an intercept the
/// first single-factor term gets one column per level.
pub fn model_matrix(intercept: bool, terms: &[Interaction], data: &DataTable, levels: &LevelMap) -> Result<Design> {
    let n = data.nrows();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut ranges = Vec::new();
    if intercept {
        cols.push(vec![1.0; n]);
        names.push("(Intercept)".to_string());
    }
    let mut full_pending = !intercept;
    for term in terms {
        let start = cols.len();
        let full = full_pending && term.len() == 1 && levels.contains_key(&term[0]);
        if full {
            full_pending = false;
        }
        let mut block: Vec<Vec<f64>> = vec![vec![1.0; n]];
        let mut labels = vec![String::new()];
        for name in term {
            let (vcols, vlabels) = variable_block(name, data, levels, full)?;
            let mut next = Vec::with_capacity(block.len() * vcols.len());
            let mut next_labels = Vec::new();
            // earlier components vary fastest
            for (vc, vl) in vcols.iter().zip(&vlabels) {
                for (bc, bl) in block.iter().zip(&labels) {
                    next.push(bc.iter().zip(vc).map(|(a, b)| a * b).collect());
                    next_labels.push(if bl.is_empty() { vl.clone() } else { format!("{bl}:{vl}") });
                }
            }
            block = next;
            labels = next_labels;
        }
        cols.extend(block);
        names.extend(labels);
        ranges.push((term.join(":"), start..cols.len()));
    }
    let matrix = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Ok(Design { matrix, names, terms: ranges })
}

/// Transposed indicator matrix `Jᵀ` (`ℓ × n`) for 0-based level codes.
pub fn build_indicator(codes: &[usize], nlevels: usize) -> Result<SparseCsc> {
    if let Some((j, &c)) = codes.iter().enumerate().find(|(_, &c)| c >= nlevels) {
        return Err(Error::Dimension(format!(
            "factor code {c} at observation {j} is out of range for {nlevels} levels"
        )));
    }
    let n = codes.len();
    SparseCsc::new(nlevels, n, (0..=n).collect(), codes.to_vec(), vec![1.0; n])
}

/// Transposed Khatri-Rao product: column `j` of `Zᵢᵀ` is `J[:, j] ⊗ Xᵢ[j, :]`.
/// Zero entries of `Xᵢ` stay structural, so every column has exactly `pᵢ` entries.
pub fn build_zti(jt: &SparseCsc, xi: &DMatrix<f64>) -> Result<SparseCsc> {
    let n = jt.ncols();
    if xi.nrows() != n {
        return Err(Error::Dimension(format!("indicator has {n} columns but the term matrix has {} rows", xi.nrows())));
    }
    let p = xi.ncols();
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut rows = Vec::with_capacity(n * p);
    let mut vals = Vec::with_capacity(n * p);
    col_ptr.push(0);
    for j in 0..n {
        for &lev in jt.col_rows(j) {
            for k in 0..p {
                rows.push(lev * p + k);
                vals.push(xi[(j, k)]);
            }
        }
        col_ptr.push(rows.len());
    }
    SparseCsc::new(jt.nrows() * p, n, col_ptr, rows, vals)
}

/// Upper-triangular `Tᵀ` pattern in CSC order (column pointers, rows, θ indices).
pub fn template(p: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut col_ptr = vec![0];
    let mut rows = Vec::new();
    let mut lind = Vec::new();
    for c in 0..p {
        for r in 0..=c {
            rows.push(r);
            lind.push(tri_index(p, c, r));
        }
        col_ptr.push(rows.len());
    }
    (col_ptr, rows, lind)
}

/// Column-major position of `(i, j)`, `i ≥ j`, within the lower triangle of a `p × p` matrix.
pub fn tri_index(p: usize, i: usize, j: usize) -> usize {
    j * p - j * (j + 1) / 2 + i
}
