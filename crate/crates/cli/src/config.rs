//! Command-line arguments and the run configuration they resolve to.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmmfit::inference::SimulationMode;
use lmmfit::optim::NmOptions;
use lmmfit::sparse::Ordering;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "lmmfit", version, about = "Fit linear mixed-effects models to CSV data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and print its summary.
    Fit(ModelArgs),
    /// Likelihood profiles and profile confidence intervals.
    Profile {
        #[command(flatten)]
        model: ModelArgs,
        /// Parameter to profile (repeatable); all parameters by default.
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Parametric bootstrap of the variance components and fixed effects.
    Bootstrap {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nsim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Sequential F table for one model, likelihood-ratio tests for several.
    Anova(ModelArgs),
    /// Fitted values for new data.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        /// Rows to predict; defaults to the fitting data.
        #[arg(long)]
        newdata: Option<PathBuf>,
        /// Leave out the random effects.
        #[arg(long)]
        population: bool,
    },
    /// Draw responses from the fitted model.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nsim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SimMode::NewRe)]
        mode: SimMode,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model formula; repeat for `anova` to compare models.
    #[arg(long = "formula", required = true)]
    pub formulas: Vec<String>,
    #[arg(long)]
    pub data: PathBuf,
    /// Fit by REML (the default).
    #[arg(long, overrides_with = "ml")]
    pub reml: bool,
    /// Fit by maximum likelihood.
    #[arg(long, overrides_with = "reml")]
    pub ml: bool,
    /// Column of prior weights.
    #[arg(long)]
    pub weights: Option<String>,
    /// Column added to the linear predictor.
    #[arg(long)]
    pub offset: Option<String>,
    /// Treat these columns as categorical even if they look numeric.
    #[arg(long = "factor")]
    pub factors: Vec<String>,
    #[arg(long, default_value_t = NmOptions::default().ftol)]
    pub ftol: f64,
    #[arg(long, default_value_t = NmOptions::default().xtol)]
    pub xtol: f64,
    #[arg(long, default_value_t = NmOptions::default().max_eval)]
    pub max_eval: usize,
    #[arg(long, value_enum, default_value_t = OrderingArg::Natural)]
    pub ordering: OrderingArg,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Natural,
    /// Approximate minimum degree.
    Amd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// New random effects for every draw.
    NewRe,
    /// Keep the conditional modes.
    UseU,
    /// Fixed effects only.
    Population,
}

impl From<SimMode> for SimulationMode {
    fn from(m: SimMode) -> Self {
        match m {
            SimMode::NewRe => SimulationMode::NewRe,
            SimMode::UseU => SimulationMode::UseU,
            SimMode::Population => SimulationMode::Population,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Fit,
    Profile,
    Bootstrap,
    Anova,
    Predict,
    Simulate,
}

/// Everything one invocation needs, independent of how it was specified.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub formulas: Vec<String>,
    pub data: PathBuf,
    pub reml: bool,
    pub weights: Option<String>,
    pub offset: Option<String>,
    pub factors: Vec<String>,
    pub optimizer: NmOptions,
    pub ordering: Ordering,
    pub seed: u64,
    pub nsim: Option<usize>,
    pub workers: usize,
    pub level: f64,
    pub params: Vec<String>,
    pub newdata: Option<PathBuf>,
    pub population: bool,
    pub mode: SimulationMode,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `task` on one formula and data file.
    pub fn new(task: Task, formula: &str, data: impl Into<PathBuf>) -> Self {
        Self {
            task,
            formulas: vec![formula.to_string()],
            data: data.into(),
            reml: true,
            weights: None,
            offset: None,
            factors: Vec::new(),
            optimizer: NmOptions::default(),
            ordering: Ordering::Natural,
            seed: 1,
            nsim: None,
            workers: 0,
            level: 0.95,
            params: Vec::new(),
            newdata: None,
            population: false,
            mode: SimulationMode::NewRe,
            format: Format::Table,
            out: None,
        }
    }

    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let (task, m) = match &cli.command {
            Command::Fit(m) => (Task::Fit, m),
            Command::Profile { model, .. } => (Task::Profile, model),
            Command::Bootstrap { model, .. } => (Task::Bootstrap, model),
            Command::Anova(m) => (Task::Anova, m),
            Command::Predict { model, .. } => (Task::Predict, model),
            Command::Simulate { model, .. } => (Task::Simulate, model),
        };
        let mut cfg = Self::new(task, &m.formulas[0], m.data.clone());
        cfg.formulas = m.formulas.clone();
        cfg.reml = !m.ml;
        cfg.weights = m.weights.clone();
        cfg.offset = m.offset.clone();
        cfg.factors = m.factors.clone();
        cfg.optimizer = NmOptions { ftol: m.ftol, xtol: m.xtol, max_eval: m.max_eval, ..NmOptions::default() };
        cfg.ordering = match m.ordering {
            OrderingArg::Natural => Ordering::Natural,
            OrderingArg::Amd => Ordering::MinimumDegree,
        };
        cfg.format = m.format;
        cfg.out = m.out.clone();
        match cli.command {
            Command::Profile { params, level, workers, .. } => {
                cfg.params = params;
                cfg.level = level;
                cfg.workers = workers;
            }
            Command::Bootstrap { nsim, seed, workers, level, .. } => {
                cfg.nsim = Some(nsim);
                cfg.seed = seed;
                cfg.workers = workers;
                cfg.level = level;
            }
            Command::Predict { newdata, population, .. } => {
                cfg.newdata = newdata;
                cfg.population = population;
            }
            Command::Simulate { nsim, seed, mode, .. } => {
                cfg.nsim = Some(nsim);
                cfg.seed = seed;
                cfg.mode = mode.into();
            }
            Command::Fit(_) | Command::Anova(_) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.formulas.is_empty() {
            return Err(CliError::Usage("at least one --formula is required".into()));
        }
        if self.formulas.len() > 1 && self.task != Task::Anova {
            return Err(CliError::Usage("several formulas are only accepted by anova".into()));
        }
        if matches!(self.task, Task::Bootstrap | Task::Simulate) && self.nsim.is_none() {
            return Err(CliError::Usage("--nsim is required".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", self.level)));
        }
        if !(self.optimizer.ftol > 0.0 && self.optimizer.xtol > 0.0) || self.optimizer.max_eval == 0 {
            return Err(CliError::Usage("optimizer tolerances and --max-eval must be positive".into()));
        }
        Ok(())
    }
}
