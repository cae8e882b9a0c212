use serde::{Deserialize, Serialize};

use super::{dist, FitResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqAnovaRow {
    pub term: String,
    pub df: usize,
    pub sum_sq: f64,
    pub mean_sq: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub df: usize,
    pub aic: f64,
    pub bic: f64,
    pub log_lik: f64,
    pub deviance: f64,
    pub chisq: Option<f64>,
    pub chi_df: Option<usize>,
    pub p: Option<f64>,
}

impl FitResult {
    /// Sequential sums of squares from the rows of `R_X`; the intercept is left out.
    pub fn anova_seq(&self) -> Vec<SeqAnovaRow> {
        let spec = self.spec();
        let rx = self.state().rx();
        let beta = self.beta();
        let s2 = self.sigma2();
        spec.fixed_terms
            .iter()
            .filter(|t| t.name != "(Intercept)")
            .map(|t| {
                let ss: f64 = t
                    .cols
                    .clone()
                    .map(|r| {
                        let v: f64 = (r..beta.len()).map(|c| rx[(r, c)] * beta[c]).sum();
                        v * v
                    })
                    .sum();
                let df = t.cols.len();
                let ms = ss / df as f64;
                SeqAnovaRow { term: t.name.clone(), df, sum_sq: ss, mean_sq: ms, f: ms / s2 }
            })
            .collect()
    }
}

/// Likelihood-ratio comparison of nested fits. REML fits are refitted by
/// maximum likelihood first; rows are ordered by increasing `df`.
pub fn anova_compare(fits: &[(&str, &FitResult)]) -> Result<Vec<CompareRow>> {
    let Some((_, first)) = fits.first() else {
        return Ok(Vec::new());
    };
    for (name, f) in fits {
        if f.state().y() != first.state().y() {
            return Err(Error::Inference(format!("model '{name}' was fitted to a different response")));
        }
    }
    let mut ml = fits.iter().map(|(name, f)| Ok((name.to_string(), f.refit_ml()?))).collect::<Result<Vec<_>>>()?;
    ml.sort_by_key(|(_, f)| f.df());
    let mut rows: Vec<CompareRow> = Vec::with_capacity(ml.len());
    for (k, (name, f)) in ml.iter().enumerate() {
        let (chisq, chi_df, p) = if k == 0 {
            (None, None, None)
        } else {
            let prev = &ml[k - 1].1;
            let chisq = (prev.deviance() - f.deviance()).max(0.0);
            let chi_df = f.df() - prev.df();
            let p = (chi_df > 0).then(|| dist::pchisq_upper(chisq, chi_df as f64));
            (Some(chisq), Some(chi_df), p)
        };
        rows.push(CompareRow {
            model: name.clone(),
            df: f.df(),
            aic: f.aic(),
            bic: f.bic(),
            log_lik: f.log_lik(),
            deviance: f.deviance(),
            chisq,
            chi_df,
            p,
        });
    }
    Ok(rows)
}
