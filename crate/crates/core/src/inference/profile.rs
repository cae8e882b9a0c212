//! Likelihood profiles on the signed-square-root (ζ) scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{param_info, sdcor_to_theta, theta_to_sdcor, ParKind, ParamInfo};
use super::{dist, FitResult};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NmOptions};
use crate::pls::DevState;

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    /// Profiles run until `|ζ|` exceeds `√χ²(1 − alpha_max; #params)`.
    pub alpha_max: f64,
    /// Names of the parameters to profile; all of them when empty.
    pub which: Vec<String>,
    pub max_steps: usize,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub optimizer: NmOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { alpha_max: 0.05, which: Vec::new(), max_steps: 100, workers: 0, optimizer: NmOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamProfile {
    pub name: String,
    pub kind: ParKind,
    pub estimate: f64,
    /// Sorted by `value`; contains the estimate with `zeta = 0`.
    pub points: Vec<ProfilePoint>,
    /// The branch below / above the estimate stopped on a parameter bound.
    pub hit_lower: bool,
    pub hit_upper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub cutoff: f64,
    pub params: Vec<ParamProfile>,
}

/// Parameter-space objective with one coordinate held fixed.
enum Objective {
    /// `(sd, cor, ..., σ)`; non-focal coordinates are optimized on that scale.
    VarComp { state: DevState },
    /// β_j moved into the offset; θ is optimized with σ profiled out.
    Beta { state: DevState, xcol: Vec<f64>, base_offset: Vec<f64> },
}

const DEV_TOL: f64 = 1e-3;

impl Objective {
    fn eval_varcomp(state: &mut DevState, rho: &[f64]) -> Result<f64> {
        let Some(theta) = sdcor_to_theta(state.spec(), rho)? else {
            return Ok(f64::INFINITY);
        };
        state.evaluate(&theta)?;
        state.deviance_at_sigma(rho[rho.len() - 1])
    }
}

struct Profiler<'a> {
    info: &'a ParamInfo,
    focal: usize,
    estimate: f64,
    base: f64,
    /// Non-focal coordinates at the optimum.
    start: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cutoff: f64,
    opts: &'a ProfileOptions,
}

impl Profiler<'_> {
    /// Minimum deviance with the focal parameter at `value`, starting from `x0`.
    fn min_dev(&self, obj: &mut Objective, value: f64, x0: &[f64]) -> Result<(f64, Vec<f64>)> {
        match obj {
            Objective::VarComp { state } => {
                let focal = self.focal;
                let mut full = vec![0.0; x0.len() + 1];
                let mut f = |x: &[f64]| {
                    full[..focal].copy_from_slice(&x[..focal]);
                    full[focal] = value;
                    full[focal + 1..].copy_from_slice(&x[focal..]);
                    Objective::eval_varcomp(state, &full)
                };
                if x0.is_empty() {
                    return Ok((f(&[])?, Vec::new()));
                }
                let r = nelder_mead(&mut f, x0, &self.lower, Some(&self.upper), &self.opts.optimizer)?;
                Ok((r.fval, r.x))
            }
            Objective::Beta { state, xcol, base_offset } => {
                let o: Vec<f64> = base_offset.iter().zip(xcol.iter()).map(|(o, x)| o + value * x).collect();
                state.set_offset(&o)?;
                let r = nelder_mead(&mut |th: &[f64]| state.evaluate(th), x0, &self.lower, None, &self.opts.optimizer)?;
                Ok((r.fval, r.x))
            }
        }
    }

    fn zeta(&self, value: f64, dev: f64) -> Result<f64> {
        let d = dev - self.base;
        if d < -DEV_TOL {
            return Err(Error::Profile(format!(
                "profiling {} found a deviance {dev:.6} below the optimum {:.6}; the fit has not converged",
                self.info.name, self.base
            )));
        }
        Ok((value - self.estimate).signum() * d.max(0.0).sqrt())
    }

    fn branch(&self, obj: &mut Objective, dir: f64) -> Result<(Vec<ProfilePoint>, bool)> {
        let (lo, hi) = self.info.bounds();
        let bound = if dir < 0.0 { lo } else { hi };
        let dzeta = self.cutoff / 8.0;
        let mut pts = vec![ProfilePoint { value: self.estimate, zeta: 0.0 }];
        let mut x = self.start.clone();
        let mut step = if self.estimate == 0.0 { 0.001 } else { 0.01 * self.estimate.abs() };
        for _ in 0..self.opts.max_steps {
            let last = *pts.last().expect("nonempty");
            if pts.len() > 1 {
                let prev = pts[pts.len() - 2];
                let slope = (last.zeta - prev.zeta) / (last.value - prev.value);
                step = if slope.is_finite() && slope > 0.0 { dzeta / slope } else { 2.0 * step };
                let max_step = 8.0 * (last.value - prev.value).abs();
                step = step.clamp(1e-8 * (1.0 + last.value.abs()), max_step);
            }
            let mut value = last.value + dir * step;
            let at_bound = (value - bound) * dir >= 0.0;
            if at_bound {
                value = if self.info.kind == ParKind::Sigma { 0.5 * last.value } else { bound };
            }
            let (dev, xn) = self.min_dev(obj, value, &x)?;
            if !dev.is_finite() {
                return Ok((pts, at_bound));
            }
            let zeta = self.zeta(value, dev)?;
            x = xn;
            pts.push(ProfilePoint { value, zeta });
            if zeta.abs() > self.cutoff {
                return Ok((pts, false));
            }
            if at_bound && self.info.kind != ParKind::Sigma {
                return Ok((pts, true));
            }
        }
        Ok((pts, false))
    }
}

impl FitResult {
    /// Profiles the maximum-likelihood criterion; REML fits are refitted by ML first.
    pub fn profile(&self, opts: &ProfileOptions) -> Result<ProfileResult> {
        let spec = self.spec();
        let infos = param_info(spec);
        for w in &opts.which {
            if !infos.iter().any(|i| &i.name == w) {
                return Err(Error::Profile(format!("unknown parameter '{w}'")));
            }
        }
        let selected: Vec<&ParamInfo> =
            infos.iter().filter(|i| opts.which.is_empty() || opts.which.contains(&i.name)).collect();
        let cutoff = dist::qchisq(1.0 - opts.alpha_max, infos.len() as f64).sqrt();
        let ml = self.refit_ml()?;
        let rho_hat = theta_to_sdcor(spec, ml.theta(), ml.sigma())?;

        let run = |info: &ParamInfo| -> Result<ParamProfile> {
            let (mut obj, profiler) = match info.kind {
                ParKind::Beta => {
                    let j = info.index;
                    let fixed = ml.spec().fix_beta(j, 0.0)?;
                    let mut state = DevState::new(std::sync::Arc::new(fixed), &self.options().ordering)?;
                    state.set_reml(false);
                    let obj = Objective::Beta {
                        xcol: spec.x.column(j).iter().copied().collect(),
                        base_offset: spec.offset.clone(),
                        state,
                    };
                    let p = Profiler {
                        info,
                        focal: j,
                        estimate: ml.beta()[j],
                        base: ml.criterion(),
                        start: ml.theta().to_vec(),
                        lower: spec.lower.clone(),
                        upper: vec![f64::INFINITY; spec.ntheta()],
                        cutoff,
                        opts,
                    };
                    (obj, p)
                }
                _ => {
                    let focal = infos.iter().position(|i| i.name == info.name).expect("listed");
                    let vc: Vec<&ParamInfo> = infos.iter().filter(|i| i.kind != ParKind::Beta).collect();
                    let mut start = rho_hat.clone();
                    start.remove(focal);
                    let (lower, upper) =
                        vc.iter().enumerate().filter(|(k, _)| *k != focal).map(|(_, i)| i.bounds()).unzip();
                    let p = Profiler {
                        info,
                        focal,
                        estimate: rho_hat[focal],
                        base: ml.criterion(),
                        start,
                        lower,
                        upper,
                        cutoff,
                        opts,
                    };
                    (Objective::VarComp { state: ml.state().clone() }, p)
                }
            };
            let (down, hit_lower) = profiler.branch(&mut obj, -1.0)?;
            let (up, hit_upper) = profiler.branch(&mut obj, 1.0)?;
            let mut points: Vec<ProfilePoint> = down.into_iter().rev().collect();
            points.extend(up.into_iter().skip(1));
            Ok(ParamProfile {
                name: info.name.clone(),
                kind: info.kind,
                estimate: profiler.estimate,
                points,
                hit_lower,
                hit_upper,
            })
        };

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Profile(e.to_string()))?;
        let params = pool.install(|| selected.par_iter().map(|i| run(i)).collect::<Result<Vec<_>>>())?;
        Ok(ProfileResult { cutoff, params })
    }
}
