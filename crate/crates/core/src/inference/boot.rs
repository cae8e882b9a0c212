use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{param_info, theta_to_sdcor};
use super::FitResult;
use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::pls::DevState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimulationMode {
    /// Fresh spherical random effects `u* ~ N(0, σ̂²I)`.
    #[default]
    NewRe,
    /// Conditional modes `û`.
    UseU,
    /// No random-effects contribution.
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootResult {
    pub nsim: usize,
    pub seed: u64,
    /// `sd`/`cor` components, `sigma`, then the fixed effects.
    pub names: Vec<String>,
    /// One row per successful replicate, in replicate order.
    pub draws: Vec<Vec<f64>>,
    pub failures: usize,
}

/// Generator for replicate `index`: a separate stream of the seeded generator.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Inference(e.to_string()))
}

impl FitResult {
    /// One simulated response; `noise_scale` multiplies the residual noise.
    pub fn simulate_one(&self, rng: &mut ChaCha8Rng, mode: SimulationMode, noise_scale: f64) -> Vec<f64> {
        let spec = self.spec();
        let sigma = self.sigma();
        let mut eta: Vec<f64> = (&spec.x * nalgebra::DVector::from_column_slice(self.beta()))
            .iter()
            .zip(&spec.offset)
            .map(|(a, b)| a + b)
            .collect();
        let u: Option<Vec<f64>> = match mode {
            SimulationMode::NewRe => Some(
                (0..spec.q())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        sigma * z
                    })
                    .collect(),
            ),
            SimulationMode::UseU => Some(self.u().to_vec()),
            SimulationMode::Population => None,
        };
        if let Some(u) = u {
            let b = self.state().lambdat().tr_mul_vec(&u);
            for (e, z) in eta.iter_mut().zip(spec.zt.tr_mul_vec(&b)) {
                *e += z;
            }
        }
        for (e, w) in eta.iter_mut().zip(&spec.sqrt_w) {
            let z: f64 = StandardNormal.sample(rng);
            *e += noise_scale * sigma * z / w;
        }
        eta
    }

    /// `n × nsim`; column `j` depends only on `(seed, j)`.
    pub fn simulate(&self, nsim: usize, seed: u64, mode: SimulationMode) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> =
            (0..nsim).into_par_iter().map(|j| self.simulate_one(&mut replicate_rng(seed, j), mode, 1.0)).collect();
        DMatrix::from_fn(self.n(), nsim, |i, j| cols[j][i])
    }

    /// Parametric bootstrap: simulate with new random effects, refit from θ̂,
    /// record the parameters. Failed refits are counted and dropped.
    pub fn bootstrap(&self, nsim: usize, seed: u64, workers: usize) -> Result<BootResult> {
        let spec = self.spec();
        // fails early for layouts without per-term parameters
        theta_to_sdcor(spec, self.theta(), self.sigma())?;
        let names = param_info(spec).into_iter().map(|i| i.name).collect();
        let lower = spec.lower.clone();
        let nm = self.options().optimizer;
        let replicate = |state: &mut DevState, j: usize| -> Result<Vec<f64>> {
            let y = self.simulate_one(&mut replicate_rng(seed, j), SimulationMode::NewRe, 1.0);
            state.set_response(&y)?;
            let r = nelder_mead(&mut |th: &[f64]| state.evaluate(th), self.theta(), &lower, None, &nm)?;
            state.evaluate(&r.x)?;
            let mut row = theta_to_sdcor(state.spec(), state.theta(), state.sigma2().sqrt())?;
            row.extend_from_slice(state.beta());
            Ok(row)
        };
        let results: Vec<Result<Vec<f64>>> = pool(workers)?.install(|| {
            (0..nsim).into_par_iter().map_init(|| self.state().clone(), |st, j| replicate(st, j)).collect()
        });
        let mut draws = Vec::with_capacity(nsim);
        let mut failures = 0;
        for r in results {
            match r {
                Ok(row) if row.iter().all(|v| v.is_finite()) => draws.push(row),
                _ => failures += 1,
            }
        }
        Ok(BootResult { nsim, seed, names, draws, failures })
    }
}
