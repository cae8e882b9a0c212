//! Box-constrained Nelder-Mead.
//!
//! Trial points are clamped onto the box `lower ≤ x ≤ upper`, so the search
//! can settle exactly on a bound (singular fits). A failed evaluation counts
//! as `+∞`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    /// Converged when `f_worst − f_best ≤ ftol · (1 + |f_best|)` ...
    pub ftol: f64,
    /// ... and every vertex is within `xtol` (max norm) of the best one.
    pub xtol: f64,
    pub max_eval: usize,
    /// Restart once from the incumbent with a fresh simplex.
    pub restart: bool,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { ftol: 1e-8, xtol: 1e-7, max_eval: 10_000, restart: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub fval: f64,
    pub n_eval: usize,
    pub converged: bool,
    /// Components within `1e-6` of a finite lower bound.
    pub boundary: Vec<bool>,
    /// Best value after each iteration.
    pub history: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const BOUNDARY_TOL: f64 = 1e-6;
const RESTART_SCALE: f64 = 0.1;

struct Counted<'a, F> {
    f: &'a mut F,
    lower: &'a [f64],
    upper: Option<&'a [f64]>,
    n_eval: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counted<'_, F> {
    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            if *v < self.lower[i] {
                *v = self.lower[i];
            }
            if let Some(u) = self.upper {
                if *v > u[i] {
                    *v = u[i];
                }
            }
        }
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        debug_assert!(x.iter().zip(self.lower).all(|(a, b)| a >= b), "infeasible point");
        self.n_eval += 1;
        match (self.f)(x) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::INFINITY,
        }
    }
}

fn initial_simplex<F: FnMut(&[f64]) -> Result<f64>>(
    c: &mut Counted<'_, F>,
    x0: &[f64],
    f0: f64,
    scale: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x0.len();
    let mut pts = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..n {
        let step = scale * x0[i].abs().max(1.0);
        let mut x = x0.to_vec();
        let up_ok = c.upper.is_none_or(|u| x0[i] + step <= u[i]);
        x[i] = if up_ok { x0[i] + step } else { x0[i] - step };
        c.project(&mut x);
        let v = c.eval(&x);
        pts.push(x);
        vals.push(v);
    }
    (pts, vals)
}

fn run<F: FnMut(&[f64]) -> Result<f64>>(
    c: &mut Counted<'_, F>,
    x0: &[f64],
    f0: f64,
    scale: f64,
    opts: &NmOptions,
    history: &mut Vec<f64>,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let (mut pts, mut vals) = initial_simplex(c, x0, f0, scale);
    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&k| pts[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();
        order = (0..=n).collect();
        history.push(vals[0]);

        let fspread = vals[n] - vals[0];
        let xspread =
            pts[1..].iter().flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        if fspread.is_finite() && fspread <= opts.ftol * (1.0 + vals[0].abs()) && xspread <= opts.xtol {
            return (pts[0].clone(), vals[0], true);
        }
        if c.n_eval >= opts.max_eval {
            return (pts[0].clone(), vals[0], false);
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let mut xr = along(REFLECT);
        c.project(&mut xr);
        let fr = c.eval(&xr);
        if fr < vals[0] {
            let mut xe = along(REFLECT * EXPAND);
            c.project(&mut xe);
            let fe = c.eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (mut xc, outside) =
            if fr < vals[n] { (along(REFLECT * CONTRACT), true) } else { (along(-CONTRACT), false) };
        c.project(&mut xc);
        let fc = c.eval(&xc);
        let accept = if outside { fc <= fr } else { fc < vals[n] };
        if accept {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        let best = pts[0].clone();
        for k in 1..=n {
            let mut x: Vec<f64> = best.iter().zip(&pts[k]).map(|(b, p)| b + SHRINK * (p - b)).collect();
            c.project(&mut x);
            vals[k] = c.eval(&x);
            pts[k] = x;
        }
    }
}

/// Minimizes `f` over `lower ≤ x ≤ upper` starting from `x0`.
pub fn nelder_mead<F>(
    f: &mut F,
    x0: &[f64],
    lower: &[f64],
    upper: Option<&[f64]>,
    opts: &NmOptions,
) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if lower.len() != x0.len() || upper.is_some_and(|u| u.len() != x0.len()) {
        return Err(Error::Dimension("bounds and starting point differ in length".into()));
    }
    if let Some(i) = (0..x0.len()).find(|&i| x0[i] < lower[i] || upper.is_some_and(|u| x0[i] > u[i])) {
        return Err(Error::Optimizer(format!("starting value x[{i}] = {} is outside the bounds", x0[i])));
    }
    let mut c = Counted { f, lower, upper, n_eval: 0 };
    c.n_eval += 1;
    let f0 = (c.f)(x0).map_err(|e| Error::Optimizer(format!("evaluation failed at the starting point: {e}")))?;
    if !f0.is_finite() {
        return Err(Error::Optimizer(format!("objective is {f0} at the starting point")));
    }
    let mut history = Vec::new();
    let (mut x, mut fval, mut converged) =
        if x0.is_empty() { (Vec::new(), f0, true) } else { run(&mut c, x0, f0, 0.1, opts, &mut history) };
    if opts.restart && !x.is_empty() && c.n_eval < opts.max_eval {
        let (x2, f2, conv2) = run(&mut c, &x.clone(), fval, RESTART_SCALE, opts, &mut history);
        if f2 <= fval {
            x = x2;
            fval = f2;
        }
        converged = conv2;
    }
    let boundary = x.iter().zip(lower).map(|(v, l)| l.is_finite() && v - l <= BOUNDARY_TOL).collect();
    Ok(OptResult { x, fval, n_eval: c.n_eval, converged, boundary, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub index: usize,
    /// +1 or −1.
    pub direction: i8,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub probes: usize,
    /// Probes that beat the reported optimum by more than `1e-6`.
    pub improving: Vec<Probe>,
}

impl ConvergenceReport {
    pub fn ok(&self) -> bool {
        self.improving.is_empty()
    }
}

/// Coordinate probes at `x ± 1e-4 · max(|xᵢ|, 1)`, skipping sides outside the bounds.
pub fn check_convergence<F>(res: &OptResult, f: &mut F, lower: &[f64], upper: Option<&[f64]>) -> ConvergenceReport
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut improving = Vec::new();
    let mut probes = 0;
    for i in 0..res.x.len() {
        let delta = 1e-4 * res.x[i].abs().max(1.0);
        for dir in [1i8, -1] {
            let v = res.x[i] + f64::from(dir) * delta;
            if v < lower[i] || upper.is_some_and(|u| v > u[i]) {
                continue;
            }
            let mut x = res.x.clone();
            x[i] = v;
            probes += 1;
            if let Ok(fx) = f(&x) {
                if fx < res.fval - 1e-6 {
                    improving.push(Probe { index: i, direction: dir, value: fx });
                }
            }
        }
    }
    ConvergenceReport { probes, improving }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_interior_minimum() {
        let c = [1.5, -0.7, 0.3];
        let mut f = |x: &[f64]| -> Result<f64> {
            let d: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            Ok(2.0 * d[0] * d[0] + d[1] * d[1] + 3.0 * d[2] * d[2] + d[0] * d[1])
        };
        let lower = [f64::NEG_INFINITY; 3];
        let r = nelder_mead(&mut f, &[0.0, 0.0, 0.0], &lower, None, &NmOptions::default()).unwrap();
        assert!(r.converged);
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-5, "{:?}", r.x);
        }
    }

    #[test]
    fn minimum_on_the_bound() {
        let mut f = |x: &[f64]| -> Result<f64> { Ok((x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2)) };
        let r = nelder_mead(&mut f, &[1.0, 1.0], &[0.0, 0.0], None, &NmOptions::default()).unwrap();
        assert_eq!(r.x[0], 0.0);
        assert_eq!(r.boundary, vec![true, false]);
    }

    #[test]
    fn failure_at_start_aborts() {
        let mut f = |_: &[f64]| -> Result<f64> { Err(Error::RankDeficient) };
        assert!(nelder_mead(&mut f, &[1.0], &[0.0], None, &NmOptions::default()).is_err());
    }

    #[test]
    fn failures_elsewhere_count_as_infinite() {
        let mut f = |x: &[f64]| -> Result<f64> {
            if x[0] > 2.0 {
                Err(Error::RankDeficient)
            } else {
                Ok((x[0] - 1.0).powi(2))
            }
        };
        let r = nelder_mead(&mut f, &[1.9], &[f64::NEG_INFINITY], None, &NmOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn truncated_run_has_improving_probes() {
        let mut f = |x: &[f64]| -> Result<f64> { Ok((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2)) };
        let opts = NmOptions { max_eval: 5, restart: false, ..Default::default() };
        let lower = [f64::NEG_INFINITY; 2];
        let r = nelder_mead(&mut f, &[0.0, 0.0], &lower, None, &opts).unwrap();
        assert!(!r.converged);
        assert!(!check_convergence(&r, &mut f, &lower, None).ok());
    }

    #[test]
    fn boundary_probe_is_one_sided() {
        let mut f = |x: &[f64]| -> Result<f64> { Ok(x[0] * x[0] + 1.0) };
        let r = nelder_mead(&mut f, &[0.5], &[0.0], None, &NmOptions::default()).unwrap();
        let rep = check_convergence(&r, &mut f, &[0.0], None);
        assert_eq!(rep.probes, 1);
        assert!(rep.ok());
    }
}
