//! Penalized least squares: θ ↦ profiled deviance or REML criterion.
//!
//! For a given θ the random effects are spherical, `b = Λθ u`, and
//! `(u, β)` minimize `‖W½(y − o − ZΛu − Xβ)‖² + ‖u‖²`. The minimizer comes
//! from the sparse factor `L Lᵀ = P(ΛᵀZᵀWZΛ + I)Pᵀ` and the dense blocks
//! `R_ZX`, `R_X`; the criterion is assembled from `log|L|²`, `log|R_X|²` and
//! the penalized residual sum of squares.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sparse::{CholFactor, Ordering, SolveMode, SparseCsc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Fresh,
    Lambda,
    Solved,
    Predicted,
}

#[derive(Debug, Clone)]
pub struct DevState {
    spec: Arc<ModelSpec>,
    reml: bool,
    y: Vec<f64>,
    offset: Vec<f64>,
    // constants
    ztw: SparseCsc,
    ztwy: Vec<f64>,
    ztwx: DMatrix<f64>,
    xtwx: DMatrix<f64>,
    xtwy: DVector<f64>,
    xw: DMatrix<f64>,
    log_det_w: f64,
    // per-θ state
    theta: Vec<f64>,
    lambdat: SparseCsc,
    lt_ztw: SparseCsc,
    factor: CholFactor,
    cu: Vec<f64>,
    rzx: DMatrix<f64>,
    rxtrx: DMatrix<f64>,
    rx: DMatrix<f64>,
    beta: Vec<f64>,
    u: Vec<f64>,
    b: Vec<f64>,
    mu: Vec<f64>,
    wtres: Vec<f64>,
    pwrss: f64,
    ldl2: f64,
    ldrx2: f64,
    stage: Stage,
}

fn scale_cols(zt: &SparseCsc, s: &[f64]) -> SparseCsc {
    let mut out = zt.clone();
    let ptr = zt.col_ptr().to_vec();
    let vals = out.values_mut();
    for j in 0..zt.ncols() {
        for v in &mut vals[ptr[j]..ptr[j + 1]] {
            *v *= s[j];
        }
    }
    out
}

impl DevState {
    /// Precomputes the constant cross-products and analyzes the sparsity
    /// pattern of `ΛᵀZᵀWZΛ + I` once.
    pub fn new(spec: Arc<ModelSpec>, ordering: &Ordering) -> Result<Self> {
        let n = spec.n();
        let p = spec.p();
        let ztw = scale_cols(&spec.zt, &spec.sqrt_w);
        let xw = DMatrix::from_fn(n, p, |i, j| spec.x[(i, j)] * spec.sqrt_w[i]);
        let ztwx = ztw.mul_dense(&xw)?;
        let xtwx = xw.transpose() * &xw;
        let lambdat = spec.lambdat_at(&spec.theta0);
        let lt_ztw = lambdat.mul_sparse(&ztw)?;
        let pattern = lt_ztw.tcrossprod_lower();
        let factor = CholFactor::analyze(&pattern, ordering)?;
        let q = spec.q();
        let log_det_w = 2.0 * spec.sqrt_w.iter().map(|s| s.ln()).sum::<f64>();
        let mut st = Self {
            reml: spec.reml,
            y: spec.y.clone(),
            offset: spec.offset.clone(),
            ztwy: Vec::new(),
            xtwy: DVector::zeros(p),
            ztw,
            ztwx,
            xtwx,
            xw,
            log_det_w,
            theta: spec.theta0.clone(),
            lambdat,
            lt_ztw,
            factor,
            cu: vec![0.0; q],
            rzx: DMatrix::zeros(q, p),
            rxtrx: DMatrix::zeros(p, p),
            rx: DMatrix::zeros(p, p),
            beta: vec![0.0; p],
            u: vec![0.0; q],
            b: vec![0.0; q],
            mu: vec![0.0; n],
            wtres: vec![0.0; n],
            pwrss: f64::NAN,
            ldl2: f64::NAN,
            ldrx2: 0.0,
            stage: Stage::Fresh,
            spec,
        };
        st.refresh_response_constants();
        Ok(st)
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Self::new(Arc::new(spec.clone()), &Ordering::Natural)
    }

    fn refresh_response_constants(&mut self) {
        let wy: Vec<f64> = (0..self.y.len()).map(|i| (self.y[i] - self.offset[i]) * self.spec.sqrt_w[i]).collect();
        self.ztwy = self.ztw.mul_vec(&wy);
        self.xtwy = self.xw.tr_mul(&DVector::from_vec(wy));
        self.stage = Stage::Fresh;
    }

    /// Replaces the response; structures and the symbolic factor are kept.
    pub fn set_response(&mut self, y: &[f64]) -> Result<()> {
        if y.len() != self.y.len() {
            return Err(Error::Dimension(format!("response of length {} for n = {}", y.len(), self.y.len())));
        }
        self.y = y.to_vec();
        self.refresh_response_constants();
        Ok(())
    }

    pub fn set_offset(&mut self, o: &[f64]) -> Result<()> {
        if o.len() != self.offset.len() {
            return Err(Error::Dimension(format!("offset of length {} for n = {}", o.len(), self.offset.len())));
        }
        self.offset = o.to_vec();
        self.refresh_response_constants();
        Ok(())
    }

    pub fn set_reml(&mut self, reml: bool) {
        self.reml = reml;
    }

    pub fn spec(&self) -> &Arc<ModelSpec> {
        &self.spec
    }

    pub fn reml(&self) -> bool {
        self.reml && self.spec.p() > 0
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.spec.p()
    }

    pub fn q(&self) -> usize {
        self.spec.q()
    }

    /// Degrees of freedom in the σ² denominator: `n` for ML, `n − p` for REML.
    pub fn deg_free(&self) -> f64 {
        if self.reml() {
            (self.n() - self.p()) as f64
        } else {
            self.n() as f64
        }
    }

    fn require(&self, s: Stage) -> Result<()> {
        if self.stage >= s {
            Ok(())
        } else {
            Err(Error::Pls(format!("evaluation steps called out of order (need {s:?}, at {:?})", self.stage)))
        }
    }

    /// Step I: `Λᵀ` values from `θ[Lind]`, then the numeric factor of `ΛᵀZᵀWZΛ + I`.
    pub fn update_lambda(&mut self, theta: &[f64]) -> Result<()> {
        self.stage = Stage::Fresh;
        let m = self.spec.ntheta();
        if theta.len() != m {
            return Err(Error::Dimension(format!("theta has length {}, expected {m}", theta.len())));
        }
        for (k, (&t, &l)) in theta.iter().zip(&self.spec.lower).enumerate() {
            if !(t >= l) {
                return Err(Error::Bounds { index: k, value: t, lower: l });
            }
        }
        self.theta = theta.to_vec();
        for (v, &k) in self.lambdat.values_mut().iter_mut().zip(&self.spec.lind) {
            *v = theta[k];
        }
        self.lt_ztw = self.lambdat.mul_sparse(&self.ztw)?;
        let a = self.lt_ztw.tcrossprod_lower();
        self.factor.update(&a, 1.0)?;
        self.stage = Stage::Lambda;
        Ok(())
    }

    fn solve_pl(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.factor.solve(SolveMode::P, v)?;
        self.factor.solve_in_place(SolveMode::L, &mut x)?;
        Ok(x)
    }

    /// Step II: `c_u`, `R_ZX`, `R_XᵀR_X`, `β̂`, `u` and `b = Λu`.
    pub fn solve(&mut self) -> Result<()> {
        self.require(Stage::Lambda)?;
        let p = self.p();
        self.cu = self.solve_pl(&self.lambdat.mul_vec(&self.ztwy))?;
        let lzx = self.lambdat.mul_dense(&self.ztwx)?;
        self.rzx = self.factor.solve_dense(SolveMode::P, &lzx)?;
        self.rzx = self.factor.solve_dense(SolveMode::L, &self.rzx)?;
        self.rxtrx = &self.xtwx - self.rzx.tr_mul(&self.rzx);
        let cu = DVector::from_column_slice(&self.cu);
        if p > 0 {
            let chol = Cholesky::new(self.rxtrx.clone()).ok_or(Error::RankDeficient)?;
            let l = chol.l();
            for j in 0..p {
                if !(l[(j, j)].powi(2) > 1e-12 * self.xtwx[(j, j)].max(f64::MIN_POSITIVE)) {
                    return Err(Error::RankDeficient);
                }
            }
            let rhs = &self.xtwy - self.rzx.tr_mul(&cu);
            let beta = chol.solve(&rhs);
            self.ldrx2 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            self.rx = l.transpose();
            self.beta = beta.as_slice().to_vec();
        } else {
            self.beta.clear();
            self.ldrx2 = 0.0;
        }
        let beta = DVector::from_column_slice(&self.beta);
        let r = &cu - &self.rzx * &beta;
        let mut u = r.as_slice().to_vec();
        self.factor.solve_in_place(SolveMode::Lt, &mut u)?;
        self.factor.solve_in_place(SolveMode::Pt, &mut u)?;
        self.b = self.lambdat.tr_mul_vec(&u);
        self.u = u;
        self.ldl2 = self.factor.logdet2()?;
        self.stage = Stage::Solved;
        Ok(())
    }

    /// Step III: `μ = Zb + Xβ + o` and weighted residuals.
    pub fn linpred(&mut self) -> Result<()> {
        self.require(Stage::Solved)?;
        let zb = self.spec.zt.tr_mul_vec(&self.b);
        let xb = &self.spec.x * DVector::from_column_slice(&self.beta);
        for i in 0..self.n() {
            self.mu[i] = zb[i] + xb[i] + self.offset[i];
            self.wtres[i] = self.spec.sqrt_w[i] * (self.y[i] - self.mu[i]);
        }
        self.pwrss = self.wrss() + self.sqr_u();
        self.stage = Stage::Predicted;
        Ok(())
    }

    /// Step IV: profiled deviance (ML) or REML criterion.
    pub fn criterion(&self) -> Result<f64> {
        self.require(Stage::Predicted)?;
        let df = self.deg_free();
        Ok(self.log_det() + df * (1.0 + (2.0 * PI * self.pwrss).ln() - df.ln()))
    }

    /// Runs all four steps at θ.
    pub fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        self.update_lambda(theta)?;
        self.solve()?;
        self.linpred()?;
        self.criterion()
    }

    /// `log|L|² (+ log|R_X|²) − log|W|` at the current state.
    pub fn log_det(&self) -> f64 {
        let rx = if self.reml() { self.ldrx2 } else { 0.0 };
        self.ldl2 + rx - self.log_det_w
    }

    /// −2 log-likelihood (or REML analogue) with σ held fixed.
    pub fn deviance_at_sigma(&self, sigma: f64) -> Result<f64> {
        self.require(Stage::Predicted)?;
        let s2 = sigma * sigma;
        Ok(self.log_det() + self.deg_free() * (2.0 * PI * s2).ln() + self.pwrss / s2)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn wtres(&self) -> &[f64] {
        &self.wtres
    }
    pub fn cu(&self) -> &[f64] {
        &self.cu
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }
    pub fn pwrss(&self) -> f64 {
        self.pwrss
    }
    pub fn ldl2(&self) -> f64 {
        self.ldl2
    }
    pub fn ldrx2(&self) -> f64 {
        self.ldrx2
    }
    pub fn log_det_w(&self) -> f64 {
        self.log_det_w
    }
    pub fn rzx(&self) -> &DMatrix<f64> {
        &self.rzx
    }
    pub fn rxtrx(&self) -> &DMatrix<f64> {
        &self.rxtrx
    }
    /// Upper-triangular `R_X` with `R_XᵀR_X = X'WX − R_ZXᵀR_ZX`.
    pub fn rx(&self) -> &DMatrix<f64> {
        &self.rx
    }
    pub fn factor(&self) -> &CholFactor {
        &self.factor
    }
    pub fn lambdat(&self) -> &SparseCsc {
        &self.lambdat
    }
    /// `ΛᵀZᵀW½` at the current θ.
    pub fn lt_ztw(&self) -> &SparseCsc {
        &self.lt_ztw
    }
    pub fn ztw(&self) -> &SparseCsc {
        &self.ztw
    }
    pub fn xw(&self) -> &DMatrix<f64> {
        &self.xw
    }

    pub fn wrss(&self) -> f64 {
        self.wtres.iter().map(|r| r * r).sum()
    }

    pub fn sqr_u(&self) -> f64 {
        self.u.iter().map(|r| r * r).sum()
    }

    /// `σ̂² = r² / df`.
    pub fn sigma2(&self) -> f64 {
        self.pwrss / self.deg_free()
    }

    /// Gradient of the criterion with respect to θ at the current state.
    ///
    /// Uses a dense `V = (ΛᵀZᵀWZΛ + I)⁻¹`; intended for checking, not for
    /// the optimizer.
    pub fn gradient(&self) -> Result<Vec<f64>> {
        self.require(Stage::Predicted)?;
        let spec = &self.spec;
        for (k, (&t, &l)) in self.theta.iter().zip(&spec.lower).enumerate() {
            if l == 0.0 && t == 0.0 {
                return Err(Error::Pls(format!("gradient undefined at boundary (theta[{k}] = 0)")));
            }
        }
        let q = self.q();
        let p = self.p();
        let m = spec.ntheta();
        let eye = DMatrix::<f64>::identity(q, q);
        let v = self.factor.solve_dense(SolveMode::P, &eye)?;
        let v = self.factor.solve_dense(SolveMode::L, &v)?;
        let v = self.factor.solve_dense(SolveMode::Lt, &v)?;
        let v = self.factor.solve_dense(SolveMode::Pt, &v)?;
        // K = ΛᵀZᵀWZ (q × q), VK
        let k = self.lt_ztw.mul_sparse(&self.ztw.transpose())?.to_dense();
        let vk = &v * &k;
        let ztwr = self.ztw.mul_vec(&self.wtres);
        let r2 = self.pwrss;

        let g = self.lambdat.mul_dense(&self.ztwx)?; // ΛᵀZᵀWX
        let vg = &v * &g;
        let rx_inv = if self.reml() {
            Some(Cholesky::new(self.rxtrx.clone()).ok_or(Error::RankDeficient)?.inverse())
        } else {
            None
        };
        let zwz = self.ztw.mul_sparse(&self.ztw.transpose())?.to_dense();
        let lambda_dense = self.lambdat.transpose().to_dense();

        let mut grad = vec![0.0; m];
        let mut positions: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
        for c in 0..q {
            let start = self.lambdat.col_ptr()[c];
            for (off, &r) in self.lambdat.col_rows(c).iter().enumerate() {
                positions[spec.lind[start + off]].push((r, c));
            }
        }
        for (i, pos) in positions.iter().enumerate() {
            let mut dlog = 0.0;
            let mut dr2 = 0.0;
            for &(r, c) in pos {
                dlog += 2.0 * vk[(r, c)];
                dr2 += -2.0 * self.u[r] * ztwr[c];
            }
            let mut gi = dlog + self.deg_free() * dr2 / r2;
            if let Some(inv) = &rx_inv {
                // dΛᵀ has ones at `pos`; dG = dΛᵀ ZᵀWX, dA = dΛᵀ ZᵀWZ Λ + Λᵀ ZᵀWZ dΛ
                let mut dg = DMatrix::<f64>::zeros(q, p);
                let mut dlt = DMatrix::<f64>::zeros(q, q);
                for &(r, c) in pos {
                    for j in 0..p {
                        dg[(r, j)] += self.ztwx[(c, j)];
                    }
                    dlt[(r, c)] += 1.0;
                }
                let da_half = &dlt * &zwz * &lambda_dense;
                let da = &da_half + da_half.transpose();
                let dm = dg.tr_mul(&vg) + vg.tr_mul(&dg) - vg.tr_mul(&(&da * &vg));
                let drx = -dm;
                gi += (inv * drx).trace();
            }
            grad[i] = gi;
        }
        Ok(grad)
    }
}
