//! Variance components on the standard-deviation / correlation scale.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{tri_index, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParKind {
    Sd,
    Cor,
    Sigma,
    Beta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParKind,
    /// Term index for `Sd`/`Cor`; coefficient index for `Beta`.
    pub index: usize,
    pub i: usize,
    pub j: usize,
}

impl ParamInfo {
    /// Box for this parameter on its natural scale.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            ParKind::Sd | ParKind::Sigma => (0.0, f64::INFINITY),
            ParKind::Cor => (-1.0, 1.0),
            ParKind::Beta => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Variance-component parameters (per term, column-major lower triangle,
/// then `sigma`) followed by the fixed effects.
pub fn param_info(spec: &ModelSpec) -> Vec<ParamInfo> {
    let mut out = Vec::new();
    for (k, t) in spec.terms.iter().enumerate() {
        for j in 0..t.p {
            for i in j..t.p {
                let (name, kind) = if i == j {
                    (format!("sd_{}|{}", t.cnms[i], t.group), ParKind::Sd)
                } else {
                    (format!("cor_{}.{}|{}", t.cnms[i], t.cnms[j], t.group), ParKind::Cor)
                };
                out.push(ParamInfo { name, kind, index: k, i, j });
            }
        }
    }
    out.push(ParamInfo { name: "sigma".into(), kind: ParKind::Sigma, index: 0, i: 0, j: 0 });
    for (k, n) in spec.x_names.iter().enumerate() {
        out.push(ParamInfo { name: n.clone(), kind: ParKind::Beta, index: k, i: 0, j: 0 });
    }
    out
}

/// Relative factor `Tₖ` of term `k` from θ (standard layout).
pub fn template_of(spec: &ModelSpec, theta: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let ranges = spec.theta_ranges()?;
    let p = spec.terms[k].p;
    let start = ranges[k].start;
    Ok(DMatrix::from_fn(p, p, |i, j| if i >= j { theta[start + tri_index(p, i, j)] } else { 0.0 }))
}

/// `(sd, cor, ..., sigma)` from `(θ, σ)`.
pub fn theta_to_sdcor(spec: &ModelSpec, theta: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(theta.len() + 1);
    for k in 0..spec.terms.len() {
        let t = template_of(spec, theta, k)?;
        let s = &t * t.transpose() * (sigma * sigma);
        let p = s.nrows();
        let sd: Vec<f64> = (0..p).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
        for j in 0..p {
            for i in j..p {
                if i == j {
                    out.push(sd[i]);
                } else if sd[i] > 0.0 && sd[j] > 0.0 {
                    out.push((s[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0));
                } else {
                    out.push(0.0);
                }
            }
        }
    }
    out.push(sigma);
    Ok(out)
}

/// Lower Cholesky factor of a positive semidefinite matrix; zero pivots give
/// zero columns. `None` if the matrix is not PSD.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = a.nrows();
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d < -tol {
            return None;
        }
        if d <= tol {
            for i in j + 1..p {
                let r = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                if r.abs() > 1e-7 * scale {
                    return None;
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..p {
            l[(i, j)] = (a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>()) / ljj;
        }
    }
    Some(l)
}

/// θ from `(sd, cor, ..., sigma)`; `None` when a correlation block is not
/// positive semidefinite or `sigma ≤ 0`.
pub fn sdcor_to_theta(spec: &ModelSpec, rho: &[f64]) -> Result<Option<Vec<f64>>> {
    let ranges = spec.theta_ranges()?;
    let sigma = rho[rho.len() - 1];
    if !(sigma > 0.0) {
        return Ok(None);
    }
    let mut theta = vec![0.0; spec.ntheta()];
    for (k, t) in spec.terms.iter().enumerate() {
        let p = t.p;
        let r = &ranges[k];
        let at = |i: usize, j: usize| rho[r.start + tri_index(p, i, j)];
        let sd: Vec<f64> = (0..p).map(|i| at(i, i)).collect();
        if sd.iter().any(|&s| s < 0.0) {
            return Ok(None);
        }
        let cov = DMatrix::from_fn(p, p, |i, j| {
            let (a, b) = if i >= j { (i, j) } else { (j, i) };
            let c = if a == b { 1.0 } else { at(a, b) };
            c * sd[i] * sd[j] / (sigma * sigma)
        });
        let Some(l) = psd_cholesky(&cov) else {
            return Ok(None);
        };
        for j in 0..p {
            for i in j..p {
                theta[r.start + tri_index(p, i, j)] = l[(i, j)];
            }
        }
    }
    Ok(Some(theta))
}
