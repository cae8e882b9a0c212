use serde::{Deserialize, Serialize};

use super::boot::BootResult;
use super::profile::{ParamProfile, ProfileResult};
use super::{dist, quantile, FitResult};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    Wald,
    Profile,
    Boot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub name: String,
    pub method: IntervalMethod,
    /// `None` when the profile neither reached the cutoff nor a bound.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Set when the profile was not monotone and linear interpolation was used.
    pub linear_fallback: bool,
}

impl FitResult {
    /// `β̂ ± z·SE`.
    pub fn confint_wald(&self, level: f64) -> Result<Vec<Interval>> {
        let z = dist::qnorm(0.5 + level / 2.0);
        let se = self.std_errors()?;
        Ok(self
            .spec()
            .x_names
            .iter()
            .zip(self.beta())
            .zip(se)
            .map(|((name, b), s)| Interval {
                name: name.clone(),
                method: IntervalMethod::Wald,
                lower: Some(b - z * s),
                upper: Some(b + z * s),
                linear_fallback: false,
            })
            .collect())
    }
}

/// Monotone cubic Hermite interpolant (Fritsch–Carlson) through strictly
/// increasing `x`.
#[derive(Debug, Clone)]
pub struct MonotoneSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneSpline {
    /// `None` unless `x` is strictly increasing and `y` is monotone.
    pub fn new(x: &[f64], y: &[f64]) -> Option<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let inc = d.iter().all(|&s| s >= 0.0);
        let dec = d.iter().all(|&s| s <= 0.0);
        if !inc && !dec {
            return None;
        }
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for k in 1..n - 1 {
            m[k] = if d[k - 1] * d[k] <= 0.0 { 0.0 } else { 0.5 * (d[k - 1] + d[k]) };
        }
        for k in 0..n - 1 {
            if d[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / d[k];
            let b = m[k + 1] / d[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[k] = t * a * d[k];
                m[k + 1] = t * b * d[k];
            }
        }
        Some(Self { x: x.to_vec(), y: y.to_vec(), m })
    }

    /// Evaluates inside `[x₀, x_last]`; `None` outside.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let n = self.x.len();
        if !(t >= self.x[0] && t <= self.x[n - 1]) {
            return None;
        }
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            i => (i - 1).min(n - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        Some(
            (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k]
                + (s3 - 2.0 * s2 + s) * h * self.m[k]
                + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1]
                + (s3 - s2) * h * self.m[k + 1],
        )
    }
}

/// First crossing of `zeta = target` by straight-line interpolation.
fn linear_inverse(points: &[(f64, f64)], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((z0, v0), (z1, v1)) = (w[0], w[1]);
        let between = (z0 - target) * (z1 - target) <= 0.0 && z0 != z1;
        between.then(|| v0 + (target - z0) * (v1 - v0) / (z1 - z0))
    })
}

impl ParamProfile {
    /// Value where ζ crosses `target`, by interpolating value as a function of ζ.
    pub fn inverse(&self, target: f64) -> (Option<f64>, bool) {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.zeta, p.value)).collect();
        let zs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let vs: Vec<f64> = pts.iter().map(|p| p.1).collect();
        match MonotoneSpline::new(&zs, &vs) {
            Some(sp) => (sp.eval(target), false),
            None => {
                // order along ζ from the estimate outward
                let mut branch: Vec<(f64, f64)> = if target < 0.0 {
                    pts.iter().copied().filter(|p| p.1 <= self.estimate).rev().collect()
                } else {
                    pts.iter().copied().filter(|p| p.1 >= self.estimate).collect()
                };
                branch.dedup_by(|a, b| a.1 == b.1);
                (linear_inverse(&branch, target), true)
            }
        }
    }

    pub fn interval(&self, level: f64) -> Interval {
        let z = dist::qnorm(0.5 + level / 2.0);
        let (lo, f1) = self.inverse(-z);
        let (hi, f2) = self.inverse(z);
        let first = self.points.first().map(|p| p.value);
        let last = self.points.last().map(|p| p.value);
        Interval {
            name: self.name.clone(),
            method: IntervalMethod::Profile,
            lower: lo.or(if self.hit_lower { first } else { None }),
            upper: hi.or(if self.hit_upper { last } else { None }),
            linear_fallback: f1 || f2,
        }
    }
}

impl ProfileResult {
    pub fn confint(&self, level: f64) -> Vec<Interval> {
        self.params.iter().map(|p| p.interval(level)).collect()
    }
}

impl BootResult {
    /// Percentile intervals, one per recorded parameter.
    pub fn confint(&self, level: f64) -> Vec<Interval> {
        let a = (1.0 - level) / 2.0;
        self.names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let mut col: Vec<f64> = self.draws.iter().map(|r| r[k]).collect();
                col.sort_by(f64::total_cmp);
                let (lower, upper) = if col.is_empty() {
                    (None, None)
                } else {
                    (Some(quantile(&col, a)), Some(quantile(&col, 1.0 - a)))
                };
                Interval { name: name.clone(), method: IntervalMethod::Boot, lower, upper, linear_fallback: false }
            })
            .collect()
    }
}
