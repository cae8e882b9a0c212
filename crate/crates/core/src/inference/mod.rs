//! Fitted models and everything computed from them.

mod anova;
mod boot;
mod confint;
pub mod dist;
mod hat;
pub mod params;
mod profile;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::formula::{update_formula, Formula};
use crate::model::{BuildOptions, ModelSpec};
use crate::optim::{nelder_mead, NmOptions, OptResult};
use crate::pls::DevState;
use crate::sparse::{Ordering, SolveMode};

pub use anova::{anova_compare, CompareRow, SeqAnovaRow};
pub use boot::{replicate_rng, BootResult, SimulationMode};
pub use confint::{Interval, IntervalMethod};
pub use hat::HatMatrix;
pub use params::{param_info, ParKind, ParamInfo};
pub use profile::{ParamProfile, ProfileOptions, ProfilePoint, ProfileResult};

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub optimizer: NmOptions,
    pub ordering: Ordering,
}

/// A converged fit with its PLS state evaluated at θ̂.
#[derive(Debug, Clone)]
pub struct FitResult {
    state: DevState,
    opt: OptResult,
    criterion: f64,
    options: FitOptions,
}

/// Fits `spec` by minimizing its profiled criterion over θ.
pub fn fit(spec: ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let theta0 = spec.theta0.clone();
    let state = DevState::new(Arc::new(spec), &opts.ordering)?;
    optimize_state(state, &theta0, opts)
}

/// Parses and fits in one step.
pub fn lmer(formula: &str, data: &DataTable, reml: bool) -> Result<FitResult> {
    let spec = ModelSpec::from_formula(formula, data, &BuildOptions { reml, ..Default::default() })?;
    fit(spec, &FitOptions::default())
}

pub(crate) fn optimize_state(mut state: DevState, start: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let lower = state.spec().lower.clone();
    let mut opt = nelder_mead(&mut |th: &[f64]| state.evaluate(th), start, &lower, None, &opts.optimizer)?;
    // A zero diagonal may be a spurious boundary optimum: retry with it released.
    if opt.boundary.iter().any(|&b| b) {
        let released = release_boundary(state.spec(), &opt.x, &opt.boundary);
        if let Ok(alt) = nelder_mead(&mut |th: &[f64]| state.evaluate(th), &released, &lower, None, &opts.optimizer) {
            if alt.fval < opt.fval - 1e-8 * (1.0 + opt.fval.abs()) {
                let n_eval = opt.n_eval + alt.n_eval;
                opt = OptResult { n_eval, ..alt };
            } else {
                opt.n_eval += alt.n_eval;
            }
        }
    }
    finalize_fit(state, opt, opts.clone())
}

/// Moves each bound component to the largest magnitude in its term, at least 1.
fn release_boundary(spec: &ModelSpec, x: &[f64], at_bound: &[bool]) -> Vec<f64> {
    let ranges = spec.theta_ranges().unwrap_or_else(|_| std::iter::once(0..x.len()).collect());
    let mut out = x.to_vec();
    for r in ranges {
        let scale = x[r.clone()].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in r {
            if at_bound[k] {
                out[k] = scale;
            }
        }
    }
    out
}

/// One last evaluation at θ̂ so that every cached quantity matches it.
pub fn finalize_fit(mut state: DevState, opt: OptResult, options: FitOptions) -> Result<FitResult> {
    let criterion = state.evaluate(&opt.x)?;
    Ok(FitResult { state, opt, criterion, options })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCorrTerm {
    pub group: String,
    pub names: Vec<String>,
    /// `σ̂² T Tᵀ`, row-major.
    pub cov: Vec<Vec<f64>>,
    pub sd: Vec<f64>,
    pub corr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCorr {
    pub terms: Vec<VarCorrTerm>,
    pub residual_sd: f64,
}

/// One row of the flat variance-component table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcRecord {
    pub grp: String,
    pub var1: Option<String>,
    pub var2: Option<String>,
    pub vcov: f64,
    pub sdcor: f64,
}

impl VarCorr {
    /// Variances first, then covariances, per group; residual last.
    pub fn records(&self) -> Vec<VcRecord> {
        let mut out = Vec::new();
        for t in &self.terms {
            let p = t.sd.len();
            for i in 0..p {
                out.push(VcRecord {
                    grp: t.group.clone(),
                    var1: Some(t.names[i].clone()),
                    var2: None,
                    vcov: t.cov[i][i],
                    sdcor: t.sd[i],
                });
            }
            for j in 0..p {
                for i in j + 1..p {
                    out.push(VcRecord {
                        grp: t.group.clone(),
                        var1: Some(t.names[j].clone()),
                        var2: Some(t.names[i].clone()),
                        vcov: t.cov[i][j],
                        sdcor: t.corr[i][j],
                    });
                }
            }
        }
        out.push(VcRecord {
            grp: "Residual".into(),
            var1: None,
            var2: None,
            vcov: self.residual_sd * self.residual_sd,
            sdcor: self.residual_sd,
        });
        out
    }
}

/// Conditional modes of one term: one row per level, one column per coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RanefTable {
    pub group: String,
    pub names: Vec<String>,
    pub levels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Response,
    /// `W½(y − μ) / σ̂`.
    PearsonScaled,
}

/// Sample quantile, R's default (type 7) definition.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FitResult {
    pub fn spec(&self) -> &ModelSpec {
        self.state.spec()
    }

    pub fn state(&self) -> &DevState {
        &self.state
    }

    pub fn optimizer(&self) -> &OptResult {
        &self.opt
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    pub fn reml(&self) -> bool {
        self.state.reml()
    }

    /// REML criterion for REML fits, deviance otherwise.
    pub fn criterion(&self) -> f64 {
        self.criterion
    }

    pub fn theta(&self) -> &[f64] {
        self.state.theta()
    }

    pub fn beta(&self) -> &[f64] {
        self.state.beta()
    }

    pub fn u(&self) -> &[f64] {
        self.state.u()
    }

    pub fn b(&self) -> &[f64] {
        self.state.b()
    }

    pub fn sigma2(&self) -> f64 {
        self.state.sigma2()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2().sqrt()
    }

    pub fn n(&self) -> usize {
        self.state.n()
    }

    /// Number of estimated parameters, `p + m + 1`.
    pub fn df(&self) -> usize {
        self.spec().p() + self.spec().ntheta() + 1
    }

    pub fn log_lik(&self) -> f64 {
        -0.5 * self.criterion
    }

    /// For REML fits this is the REML criterion.
    pub fn deviance(&self) -> f64 {
        self.criterion
    }

    pub fn aic(&self) -> f64 {
        -2.0 * self.log_lik() + 2.0 * self.df() as f64
    }

    pub fn bic(&self) -> f64 {
        -2.0 * self.log_lik() + self.df() as f64 * (self.n() as f64).ln()
    }

    pub fn df_resid(&self) -> usize {
        self.n() - self.df()
    }

    /// Relative covariance factor blocks scaled by σ̂².
    pub fn varcorr(&self) -> VarCorr {
        let spec = self.spec();
        let s2 = self.sigma2();
        let lt = self.state.lambdat();
        let terms = spec
            .terms
            .iter()
            .map(|t| {
                let p = t.p;
                // the first level's diagonal block of Λᵀ is Tᵀ
                let tt = DMatrix::from_fn(p, p, |r, c| lt.get(t.offset + r, t.offset + c));
                let cov = tt.tr_mul(&tt) * s2;
                let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
                let corr = (0..p)
                    .map(|i| {
                        (0..p)
                            .map(|j| {
                                if i == j {
                                    1.0
                                } else if sd[i] > 0.0 && sd[j] > 0.0 {
                                    cov[(i, j)] / (sd[i] * sd[j])
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                VarCorrTerm {
                    group: t.group.clone(),
                    names: t.cnms.clone(),
                    cov: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
                    sd,
                    corr,
                }
            })
            .collect();
        VarCorr { terms, residual_sd: self.sigma() }
    }

    /// `σ̂² (R_XᵀR_X)⁻¹`.
    pub fn vcov(&self) -> Result<DMatrix<f64>> {
        let p = self.spec().p();
        if p == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let chol = Cholesky::new(self.state.rxtrx().clone()).ok_or(Error::RankDeficient)?;
        Ok(chol.inverse() * self.sigma2())
    }

    pub fn std_errors(&self) -> Result<Vec<f64>> {
        let v = self.vcov()?;
        Ok((0..v.nrows()).map(|i| v[(i, i)].sqrt()).collect())
    }

    pub fn t_values(&self) -> Result<Vec<f64>> {
        Ok(self.beta().iter().zip(self.std_errors()?).map(|(b, s)| b / s).collect())
    }

    /// Correlation matrix of the fixed-effect estimates.
    pub fn fixef_correlation(&self) -> Result<DMatrix<f64>> {
        let v = self.vcov()?;
        let se: Vec<f64> = (0..v.nrows()).map(|i| v[(i, i)].sqrt()).collect();
        Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / (se[i] * se[j])))
    }

    pub fn ranef(&self) -> Vec<RanefTable> {
        let b = self.b();
        self.spec()
            .terms
            .iter()
            .map(|t| RanefTable {
                group: t.group.clone(),
                names: t.cnms.clone(),
                levels: t.levels.clone(),
                values: (0..t.nlevels()).map(|j| (0..t.p).map(|k| b[t.offset + j * t.p + k]).collect()).collect(),
            })
            .collect()
    }

    /// Per-level blocks of `σ̂² Λ V Λᵀ` with `V = (ΛᵀZᵀWZΛ + I)⁻¹`, computed
    /// from triangular solves on the columns each block touches.
    pub fn cond_var(&self) -> Result<Vec<Vec<DMatrix<f64>>>> {
        let spec = self.spec();
        let lt = self.state.lambdat();
        let fac = self.state.factor();
        let q = spec.q();
        let s2 = self.sigma2();
        let mut out = Vec::with_capacity(spec.terms.len());
        for t in &spec.terms {
            let mut blocks = Vec::with_capacity(t.nlevels());
            for j in 0..t.nlevels() {
                let rows: Vec<usize> = (t.offset + j * t.p..t.offset + (j + 1) * t.p).collect();
                // Λ[R, S] = Λᵀ[S, R]ᵀ; S gathers the nonzero rows of those Λᵀ columns
                let mut s: Vec<usize> = rows.iter().flat_map(|&r| lt.col_rows(r).iter().copied()).collect();
                s.sort_unstable();
                s.dedup();
                let mut w = DMatrix::zeros(q, s.len());
                for (c, &k) in s.iter().enumerate() {
                    w[(k, c)] = 1.0;
                }
                let w = fac.solve_dense(SolveMode::P, &w)?;
                let w = fac.solve_dense(SolveMode::L, &w)?;
                let vss = w.tr_mul(&w);
                let lam = DMatrix::from_fn(rows.len(), s.len(), |a, c| lt.get(s[c], rows[a]));
                blocks.push(&lam * vss * lam.transpose() * s2);
            }
            out.push(blocks);
        }
        Ok(out)
    }

    pub fn fitted(&self) -> &[f64] {
        self.state.mu()
    }

    pub fn residuals(&self, kind: ResidualKind) -> Vec<f64> {
        match kind {
            ResidualKind::Response => self.state.y().iter().zip(self.fitted()).map(|(y, m)| y - m).collect(),
            ResidualKind::PearsonScaled => {
                let s = self.sigma();
                self.state.wtres().iter().map(|r| r / s).collect()
            }
        }
    }

    /// Min, quartiles and max of the scaled residuals.
    pub fn residual_quantiles(&self) -> [f64; 5] {
        let mut r = self.residuals(ResidualKind::PearsonScaled);
        r.sort_by(f64::total_cmp);
        [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&r, p))
    }

    /// Re-optimizes from θ̂ with a new response; structures are reused.
    pub fn refit(&self, y: &[f64]) -> Result<FitResult> {
        let mut st = self.state.clone();
        st.set_response(y)?;
        optimize_state(st, self.theta(), &self.options)
    }

    /// The same model fitted by maximum likelihood.
    pub fn refit_ml(&self) -> Result<FitResult> {
        if !self.reml() {
            return Ok(self.clone());
        }
        let mut st = self.state.clone();
        st.set_reml(false);
        optimize_state(st, self.theta(), &self.options)
    }

    /// Applies an update formula (`. ~ . - x`) and refits from scratch on `data`.
    pub fn update(&self, change: &str, data: &DataTable) -> Result<FitResult> {
        let f = update_formula(&self.spec().original, change)?;
        self.refit_formula(&f, data)
    }

    pub fn refit_formula(&self, f: &Formula, data: &DataTable) -> Result<FitResult> {
        let opts = BuildOptions { reml: self.spec().reml, frame: self.spec().options.clone() };
        fit(ModelSpec::build(f, data, &opts)?, &self.options)
    }

    /// `Xβ̂ + o`, plus `ZΛû` when `conditional`. Conditional prediction needs
    /// every grouping level to have been seen in the fit.
    pub fn predict(&self, newdata: &DataTable, conditional: bool) -> Result<Vec<f64>> {
        let spec = self.spec();
        let x = spec.x_for(newdata)?;
        let o = spec.offset_for(newdata)?;
        let xb = &x * DVector::from_column_slice(self.beta());
        let mut out: Vec<f64> = xb.iter().zip(&o).map(|(a, b)| a + b).collect();
        if conditional {
            let zt = spec.zt_for(newdata)?;
            for (v, z) in out.iter_mut().zip(zt.tr_mul_vec(self.b())) {
                *v += z;
            }
        }
        Ok(out)
    }
}
