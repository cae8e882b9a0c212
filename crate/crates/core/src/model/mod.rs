//! Model construction: frame, `X`, `Zᵀ`, the `Λᵀ` template and its θ map.

pub mod design;
mod frame;
mod inject;

use nalgebra::DMatrix;

use crate::data::{Column, DataTable};
use crate::error::{Error, Result};
use crate::formula::{parse_formula, rewrite, Formula, ReLhs};
use crate::sparse::{block_diag, vstack, SparseCsc};

pub use design::{build_indicator, build_zti, level_codes, model_matrix, template, tri_index, LevelMap};
pub use frame::{build_model_frame, grouping_column, FrameOptions, ModelFrame, SingleLevelPolicy};
pub use inject::Injection;

/// One random-effects term after expansion and sorting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReTerm {
    /// Grouping factor name, e.g. `Subject` or `a:b`.
    pub group: String,
    /// Left-hand side it was built from; `None` for injected structures.
    pub lhs: Option<ReLhs>,
    pub cnms: Vec<String>,
    pub p: usize,
    pub levels: Vec<String>,
    /// 0-based level of each observation.
    pub codes: Vec<usize>,
    /// First row of this term in `Zᵀ` / `Λᵀ`.
    pub offset: usize,
}

impl ReTerm {
    pub fn nlevels(&self) -> usize {
        self.levels.len()
    }

    pub fn q(&self) -> usize {
        self.p * self.levels.len()
    }

    pub fn ntheta(&self) -> usize {
        self.p * (self.p + 1) / 2
    }
}

/// A fixed-effects term and the columns of `X` it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTerm {
    pub name: String,
    pub cols: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Formula as written.
    pub original: Formula,
    /// Rewritten formula.
    pub formula: Formula,
    pub frame: ModelFrame,
    pub y: Vec<f64>,
    pub sqrt_w: Vec<f64>,
    pub offset: Vec<f64>,
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub fixed_terms: Vec<FixedTerm>,
    pub levels: LevelMap,
    pub zt: SparseCsc,
    pub lambdat: SparseCsc,
    /// 0-based θ index of every stored entry of `lambdat`.
    pub lind: Vec<usize>,
    pub theta0: Vec<f64>,
    pub lower: Vec<f64>,
    pub terms: Vec<ReTerm>,
    pub reml: bool,
    /// True while θ is laid out term by term with full templates.
    pub standard_layout: bool,
    pub options: FrameOptions,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub reml: bool,
    pub frame: FrameOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { reml: true, frame: FrameOptions::default() }
    }
}

impl ModelSpec {
    /// Parses, rewrites and evaluates `formula` against `data`.
    pub fn from_formula(formula: &str, data: &DataTable, opts: &BuildOptions) -> Result<Self> {
        Self::build(&parse_formula(formula)?, data, opts)
    }

    pub fn build(formula: &Formula, data: &DataTable, opts: &BuildOptions) -> Result<Self> {
        let f = rewrite(formula);
        if f.random.is_empty() {
            return Err(Error::Formula("no random-effects terms; this is a fixed-effects model".into()));
        }
        let frame = build_model_frame(&f, data, &opts.frame)?;
        let mut spec = assemble_spec(f, frame, opts)?;
        spec.original = formula.clone();
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.zt.nrows()
    }

    pub fn ntheta(&self) -> usize {
        self.theta0.len()
    }

    /// `Λᵀ` with θ scattered through `lind`.
    pub fn lambdat_at(&self, theta: &[f64]) -> SparseCsc {
        let mut l = self.lambdat.clone();
        for (v, &k) in l.values_mut().iter_mut().zip(&self.lind) {
            *v = theta[k];
        }
        l
    }

    /// Which θ components sit on a diagonal of the template (`lower == 0`).
    pub fn diagonal_mask(&self) -> Vec<bool> {
        self.lower.iter().map(|&l| l == 0.0).collect()
    }

    /// Same structures with a different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!("response of length {} for n = {}", y.len(), self.n())));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Same structures with a different offset (used for profiling β).
    pub fn with_offset(&self, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != self.n() {
            return Err(Error::Dimension(format!("offset of length {} for n = {}", offset.len(), self.n())));
        }
        Ok(Self { offset, ..self.clone() })
    }

    /// Drops column `j` of `X`, shifting its contribution `value · X[:, j]` into the offset.
    pub fn fix_beta(&self, j: usize, value: f64) -> Result<Self> {
        let p = self.p();
        if j >= p {
            return Err(Error::Dimension(format!("fixed-effect index {j} out of range for p = {p}")));
        }
        let offset = self.offset.iter().enumerate().map(|(i, o)| o + value * self.x[(i, j)]).collect();
        let x = self.x.clone().remove_column(j);
        let mut x_names = self.x_names.clone();
        x_names.remove(j);
        Ok(Self { offset, x, x_names, fixed_terms: Vec::new(), ..self.clone() })
    }

    pub fn with_reml(&self, reml: bool) -> Self {
        Self { reml, ..self.clone() }
    }

    /// Term θ ranges for the standard layout.
    pub fn theta_ranges(&self) -> Result<Vec<std::ops::Range<usize>>> {
        if !self.standard_layout {
            return Err(Error::Inference("θ layout was replaced; per-term parameters are not defined".into()));
        }
        let mut start = 0;
        Ok(self
            .terms
            .iter()
            .map(|t| {
                let r = start..start + t.ntheta();
                start = r.end;
                r
            })
            .collect())
    }

    /// Fixed-effects matrix for new data, coded like the training data.
    pub fn x_for(&self, data: &DataTable) -> Result<DMatrix<f64>> {
        let d = model_matrix(self.formula.fixed.intercept, &self.formula.fixed.terms, data, &self.levels)?;
        if d.matrix.ncols() != self.p() {
            return Err(Error::Dimension("new data produce a different number of fixed-effect columns".into()));
        }
        Ok(d.matrix)
    }

    /// Offset for new data (formula offsets plus the offset column, if any).
    pub fn offset_for(&self, data: &DataTable) -> Result<Vec<f64>> {
        let mut o = vec![0.0; data.nrows()];
        for name in self.formula.fixed.offsets.iter().chain(&self.options.offset) {
            for (a, b) in o.iter_mut().zip(data.numeric(name)?) {
                *a += b;
            }
        }
        Ok(o)
    }

    /// `Zᵀ` for new data. Every grouping level must have been seen at fit time.
    pub fn zt_for(&self, data: &DataTable) -> Result<SparseCsc> {
        let mut blocks = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let lhs = t.lhs.as_ref().ok_or_else(|| {
                Error::Inference("random-effects structure was injected; cannot rebuild Z for new data".into())
            })?;
            let parts: Vec<String> = t.group.split(':').map(String::from).collect();
            let g = grouping_column(&parts, data)?;
            let codes = level_codes(&t.group, &g, &t.levels)?;
            let terms: Vec<Vec<String>> = lhs.covariates.iter().map(|c| vec![c.clone()]).collect();
            let xi = model_matrix(lhs.intercept, &terms, data, &self.levels)?.matrix;
            blocks.push(build_zti(&build_indicator(&codes, t.nlevels())?, &xi)?);
        }
        vstack(&blocks.iter().collect::<Vec<_>>())
    }
}

/// Builds `ModelSpec` from a rewritten formula and its frame: sorts terms by
/// decreasing level count, stacks `Zᵢᵀ`, and lays out `Λᵀ`, `Lind`, θ₀ and bounds.
pub fn assemble_spec(f: Formula, frame: ModelFrame, opts: &BuildOptions) -> Result<ModelSpec> {
    let data = &frame.data;
    let n = data.nrows();
    let y = data.numeric(&f.response)?;

    let mut levels = LevelMap::new();
    design::collect_levels(f.fixed.terms.iter().flatten(), data, &mut levels)?;
    for t in &f.random {
        design::collect_levels(&t.lhs.covariates, data, &mut levels)?;
    }
    let fixed = model_matrix(f.fixed.intercept, &f.fixed.terms, data, &levels)?;

    let mut offset = vec![0.0; n];
    for name in f.fixed.offsets.iter().chain(&opts.frame.offset) {
        for (a, b) in offset.iter_mut().zip(data.numeric(name)?) {
            *a += b;
        }
    }
    let sqrt_w = match &opts.frame.weights {
        None => vec![1.0; n],
        Some(w) => data
            .numeric(w)?
            .into_iter()
            .map(|v| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.sqrt())
                } else {
                    Err(Error::Data(format!("weights must be positive and finite, found {v}")))
                }
            })
            .collect::<Result<_>>()?,
    };

    let mut terms = Vec::with_capacity(f.random.len());
    let mut zblocks = Vec::with_capacity(f.random.len());
    for rt in &f.random {
        let group = rt.grouping.to_string();
        let Some(Column::Categorical { codes, levels: glev }) = frame.grouping(&group) else {
            return Err(Error::Formula(format!("grouping '{group}' missing from the frame")));
        };
        let codes: Vec<usize> = codes.iter().map(|c| c.expect("complete cases") as usize).collect();
        let cov_terms: Vec<Vec<String>> = rt.lhs.covariates.iter().map(|c| vec![c.clone()]).collect();
        let xi = model_matrix(rt.lhs.intercept, &cov_terms, data, &levels)?;
        let zti = build_zti(&build_indicator(&codes, glev.len())?, &xi.matrix)?;
        terms.push(ReTerm {
            group,
            lhs: Some(rt.lhs.clone()),
            cnms: xi.names,
            p: xi.matrix.ncols(),
            levels: glev.clone(),
            codes,
            offset: 0,
        });
        zblocks.push(zti);
    }
    // stable sort by decreasing number of levels
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(terms[k].nlevels()));
    let terms: Vec<ReTerm> = order.iter().map(|&k| terms[k].clone()).collect();
    let zblocks: Vec<&SparseCsc> = order.iter().map(|&k| &zblocks[k]).collect();
    let zt = vstack(&zblocks)?;

    let mut terms = terms;
    let mut lam_blocks = Vec::new();
    let mut lind = Vec::new();
    let mut theta0 = Vec::new();
    let mut lower = Vec::new();
    let mut row = 0;
    for t in terms.iter_mut() {
        t.offset = row;
        row += t.q();
        let base = theta0.len();
        let (cp, rows, tl) = design::template(t.p);
        for j in 0..t.p {
            for i in j..t.p {
                let diag = i == j;
                theta0.push(if diag { 1.0 } else { 0.0 });
                lower.push(if diag { 0.0 } else { f64::NEG_INFINITY });
            }
        }
        let vals: Vec<f64> = tl.iter().map(|&k| theta0[base + k]).collect();
        let tt = SparseCsc::new(t.p, t.p, cp, rows, vals)?;
        for _ in 0..t.nlevels() {
            lam_blocks.push(tt.clone());
            lind.extend(tl.iter().map(|&k| base + k));
        }
    }
    let lambdat = block_diag(&lam_blocks.iter().collect::<Vec<_>>());

    let fixed_terms = fixed.terms.into_iter().map(|(name, cols)| FixedTerm { name, cols }).collect();
    Ok(ModelSpec {
        original: f.clone(),
        formula: f,
        y,
        sqrt_w,
        offset,
        x: fixed.matrix,
        x_names: fixed.names,
        fixed_terms,
        levels,
        zt,
        lambdat,
        lind,
        theta0,
        lower,
        terms,
        reml: opts.reml,
        standard_layout: true,
        options: opts.frame.clone(),
        frame,
    })
}
