//! CSV-driven front end: read data, fit, report.

pub mod config;
pub mod ingest;
pub mod report;

use std::path::Path;

use lmmfit::data::DataTable;
use lmmfit::inference::{
    anova_compare, fit, params::theta_to_sdcor, FitOptions, FitResult, ProfileOptions, SimulationMode,
};
use lmmfit::model::{BuildOptions, FrameOptions, ModelSpec};

pub use config::{Cli, Format, RunConfig, Task};
pub use ingest::{ingest_csv, read_csv};
pub use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input: {0}")]
    Io(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Model(#[from] lmmfit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Model(_) => 2,
        }
    }
}

/// Runs the configured task and writes its report to `--out` or returns it.
/// The returned code is 0 on success.
pub fn run(cfg: &RunConfig) -> (i32, String) {
    let outcome = execute(cfg).and_then(|report| {
        let text = match cfg.format {
            Format::Table => report.to_table(),
            Format::Json => report.to_json(),
            Format::Csv => report.to_csv(),
        };
        match &cfg.out {
            Some(path) => {
                std::fs::write(path, &text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                Ok(String::new())
            }
            None => Ok(text),
        }
    });
    match outcome {
        Ok(text) => (0, text),
        Err(e) => (e.exit_code(), format!("error: {e}\n")),
    }
}

fn load(path: &Path, factors: &[String]) -> Result<DataTable, CliError> {
    let mut data = ingest_csv(path)?;
    ingest::force_factors(&mut data, factors)?;
    Ok(data)
}

fn fit_formula(cfg: &RunConfig, formula: &str, data: &DataTable, reml: bool) -> Result<FitResult, CliError> {
    let opts = BuildOptions {
        reml,
        frame: FrameOptions { weights: cfg.weights.clone(), offset: cfg.offset.clone(), ..Default::default() },
    };
    let spec = ModelSpec::from_formula(formula, data, &opts)?;
    Ok(fit(spec, &FitOptions { optimizer: cfg.optimizer, ordering: cfg.ordering.clone() })?)
}

/// Runs the configured task and returns its report.
pub fn execute(cfg: &RunConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let data = load(&cfg.data, &cfg.factors)?;
    let formula = cfg.formulas[0].as_str();
    if cfg.task == Task::Anova && cfg.formulas.len() > 1 {
        return compare(cfg, &data);
    }
    let f = fit_formula(cfg, formula, &data, cfg.reml)?;
    let report = match cfg.task {
        Task::Fit => Report::Fit(fit_report(formula, &f)?),
        Task::Profile => {
            let opts = ProfileOptions {
                alpha_max: 1.0 - cfg.level,
                which: cfg.params.clone(),
                workers: cfg.workers,
                optimizer: cfg.optimizer,
                ..Default::default()
            };
            let pr = f.profile(&opts)?;
            Report::Profile(report::ProfileReport {
                formula: formula.into(),
                level: cfg.level,
                cutoff: pr.cutoff,
                intervals: pr.confint(cfg.level),
                profiles: pr.params,
            })
        }
        Task::Bootstrap => {
            let nsim = cfg.nsim.unwrap_or_default();
            let boot = f.bootstrap(nsim, cfg.seed, cfg.workers)?;
            let mut estimates = theta_to_sdcor(f.spec(), f.theta(), f.sigma())?;
            estimates.extend_from_slice(f.beta());
            Report::Bootstrap(report::BootReport {
                formula: formula.into(),
                nsim,
                seed: cfg.seed,
                failures: boot.failures,
                level: cfg.level,
                intervals: boot.confint(cfg.level),
                names: boot.names,
                estimates,
                draws: boot.draws,
            })
        }
        Task::Anova => Report::Anova(report::AnovaReport { formula: formula.into(), rows: f.anova_seq() }),
        Task::Predict => {
            let values = match &cfg.newdata {
                Some(path) => f.predict(&load(path, &cfg.factors)?, !cfg.population)?,
                None if cfg.population => f.predict(&data, false)?,
                None => f.fitted().to_vec(),
            };
            Report::Predict(report::PredictReport { formula: formula.into(), conditional: !cfg.population, values })
        }
        Task::Simulate => {
            let nsim = cfg.nsim.unwrap_or_default();
            let sims = f.simulate(nsim, cfg.seed, cfg.mode);
            let mode = match cfg.mode {
                SimulationMode::NewRe => "new-re",
                SimulationMode::UseU => "use-u",
                SimulationMode::Population => "population",
            };
            Report::Simulate(report::SimulateReport {
                formula: formula.into(),
                nsim,
                seed: cfg.seed,
                mode: mode.into(),
                draws: sims.column_iter().map(|c| c.iter().copied().collect()).collect(),
            })
        }
    };
    Ok(report)
}

fn compare(cfg: &RunConfig, data: &DataTable) -> Result<Report, CliError> {
    let fits = cfg.formulas.iter().map(|fm| fit_formula(cfg, fm, data, cfg.reml)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = (1..=fits.len()).map(|k| format!("m{k}")).collect();
    let pairs: Vec<(&str, &FitResult)> = names.iter().map(String::as_str).zip(&fits).collect();
    let rows = anova_compare(&pairs)?;
    let models = names
        .iter()
        .zip(&cfg.formulas)
        .map(|(n, fm)| report::ModelLine { name: n.clone(), formula: fm.clone() })
        .collect();
    Ok(Report::Compare(report::CompareReport { models, rows }))
}

pub fn fit_report(formula: &str, f: &FitResult) -> Result<report::FitReport, CliError> {
    let spec = f.spec();
    let se = f.std_errors()?;
    let t = f.t_values()?;
    let fixed = spec
        .x_names
        .iter()
        .enumerate()
        .map(|(j, name)| report::FixedRow {
            name: name.clone(),
            estimate: f.beta()[j],
            std_error: se[j],
            t_value: t[j],
        })
        .collect();
    let rows =
        |m: nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let mut groups: Vec<report::GroupCount> = Vec::new();
    for term in &spec.terms {
        if !groups.iter().any(|g| g.group == term.group) {
            groups.push(report::GroupCount { group: term.group.clone(), levels: term.nlevels() });
        }
    }
    Ok(report::FitReport {
        formula: formula.to_string(),
        reml: f.reml(),
        nobs: f.n(),
        criterion: f.criterion(),
        log_lik: f.log_lik(),
        aic: f.aic(),
        bic: f.bic(),
        df_resid: f.df_resid(),
        scaled_residuals: f.residual_quantiles().to_vec(),
        varcorr: f.varcorr().records(),
        groups,
        fixed,
        vcov: rows(f.vcov()?),
        fixed_correlation: rows(f.fixef_correlation()?),
        theta: f.theta().to_vec(),
        evaluations: f.optimizer().n_eval,
        converged: f.optimizer().converged,
        singular: f.optimizer().boundary.iter().any(|&b| b),
    })
}
