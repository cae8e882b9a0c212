//! Report types and their plain-text rendering.

use std::fmt::Write as _;

use lmmfit::inference::{CompareRow, Interval, ParamProfile, SeqAnovaRow, VcRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "lowercase")]
pub enum Report {
    Fit(FitReport),
    Profile(ProfileReport),
    Bootstrap(BootReport),
    Anova(AnovaReport),
    Compare(CompareReport),
    Predict(PredictReport),
    Simulate(SimulateReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group: String,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub formula: String,
    pub reml: bool,
    pub nobs: usize,
    /// REML criterion or deviance, matching `reml`.
    pub criterion: f64,
    pub log_lik: f64,
    pub aic: f64,
    pub bic: f64,
    pub df_resid: usize,
    /// Min, first quartile, median, third quartile, max.
    pub scaled_residuals: Vec<f64>,
    pub varcorr: Vec<VcRecord>,
    pub groups: Vec<GroupCount>,
    pub fixed: Vec<FixedRow>,
    pub vcov: Vec<Vec<f64>>,
    pub fixed_correlation: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub formula: String,
    pub level: f64,
    pub cutoff: f64,
    pub intervals: Vec<Interval>,
    pub profiles: Vec<ParamProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootReport {
    pub formula: String,
    pub nsim: usize,
    pub seed: u64,
    pub failures: usize,
    pub level: f64,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub intervals: Vec<Interval>,
    pub draws: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaReport {
    pub formula: String,
    pub rows: Vec<SeqAnovaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLine {
    pub name: String,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub models: Vec<ModelLine>,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub formula: String,
    pub conditional: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub formula: String,
    pub nsim: usize,
    pub seed: u64,
    pub mode: String,
    /// One response vector per simulation.
    pub draws: Vec<Vec<f64>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports contain only finite numbers");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Report> {
        serde_json::from_str(s)
    }

    /// The report's main table as CSV, one column per field.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let res = match self {
            Report::Fit(r) => r.fixed.iter().try_for_each(|row| w.serialize(row)),
            Report::Profile(r) => r.profiles.iter().try_for_each(|p| {
                p.points
                    .iter()
                    .try_for_each(|pt| w.serialize(ProfileRow { param: &p.name, value: pt.value, zeta: pt.zeta }))
            }),
            Report::Bootstrap(r) => write_matrix(&mut w, &r.names, r.draws.iter().map(|d| d.as_slice())),
            Report::Anova(r) => r.rows.iter().try_for_each(|row| w.serialize(row)),
            Report::Compare(r) => r.rows.iter().try_for_each(|row| w.serialize(row)),
            Report::Predict(r) => write_matrix(&mut w, &["value".to_string()], r.values.chunks(1)),
            Report::Simulate(r) => {
                let names: Vec<String> = (1..=r.nsim).map(|k| format!("sim_{k}")).collect();
                let n = r.draws.first().map_or(0, Vec::len);
                let rows: Vec<Vec<f64>> = (0..n).map(|i| r.draws.iter().map(|d| d[i]).collect()).collect();
                write_matrix(&mut w, &names, rows.iter().map(|r| r.as_slice()))
            }
        };
        res.expect("writing to memory");
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV output is UTF-8")
    }

    pub fn to_table(&self) -> String {
        match self {
            Report::Fit(r) => r.render(),
            Report::Profile(r) => r.render(),
            Report::Bootstrap(r) => r.render(),
            Report::Anova(r) => r.render(),
            Report::Compare(r) => r.render(),
            Report::Predict(r) => render_vector("fitted", &r.values),
            Report::Simulate(r) => r.render(),
        }
    }
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    param: &'a str,
    value: f64,
    zeta: f64,
}

fn write_matrix<'a>(
    w: &mut csv::Writer<Vec<u8>>,
    header: &[String],
    rows: impl Iterator<Item = &'a [f64]>,
) -> csv::Result<()> {
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    Ok(())
}

/// `x` rounded to `digits` significant digits, without exponent for moderate magnitudes.
pub fn signif(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&mag) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn pvalue(p: f64) -> String {
    if p < 2.2e-16 {
        "< 2.2e-16".into()
    } else if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        signif(p, 4)
    }
}

fn stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => ".",
        _ => "",
    }
}

/// Column-aligned text; the first `left` columns are left aligned.
fn grid(header: &[&str], rows: &[Vec<String>], left: usize) -> String {
    let ncol = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            if k < left {
                let _ = write!(s, "{c:<w$}", w = width[k]);
            } else {
                let _ = write!(s, "{c:>w$}", w = width[k]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        let mut cells: Vec<&str> = r.iter().map(String::as_str).collect();
        cells.resize(ncol, "");
        out += &line(cells);
    }
    out
}

fn render_vector(label: &str, v: &[f64]) -> String {
    let rows: Vec<Vec<String>> = v.iter().enumerate().map(|(i, x)| vec![(i + 1).to_string(), format!("{x}")]).collect();
    grid(&["row", label], &rows, 0)
}

fn interval_rows(intervals: &[Interval], level: f64) -> String {
    let lo = format!("{:.1} %", 50.0 * (1.0 - level));
    let hi = format!("{:.1} %", 100.0 - 50.0 * (1.0 - level));
    let cell = |v: Option<f64>| v.map_or("NA".to_string(), |x| signif(x, 6));
    let rows: Vec<Vec<String>> = intervals
        .iter()
        .map(|iv| {
            let mut name = iv.name.clone();
            if iv.linear_fallback {
                name.push_str(" (linear)");
            }
            vec![name, cell(iv.lower), cell(iv.upper)]
        })
        .collect();
    grid(&["", &lo, &hi], &rows, 1)
}

impl FitReport {
    fn render(&self) -> String {
        let mut s = String::new();
        let method = if self.reml { "REML" } else { "maximum likelihood" };
        let _ = writeln!(s, "Linear mixed model fit by {method}");
        let _ = writeln!(s, "Formula: {}\n", self.formula);
        if self.reml {
            let _ = writeln!(s, "REML criterion at convergence: {:.1}\n", self.criterion);
        } else {
            let rows = vec![vec![
                format!("{:.1}", self.aic),
                format!("{:.1}", self.bic),
                format!("{:.1}", self.log_lik),
                format!("{:.1}", self.criterion),
                self.df_resid.to_string(),
            ]];
            s += &grid(&["AIC", "BIC", "logLik", "deviance", "df.resid"], &rows, 0);
            s.push('\n');
        }
        s += "Scaled residuals:\n";
        s += &grid(
            &["Min", "1Q", "Median", "3Q", "Max"],
            &[self.scaled_residuals.iter().map(|v| format!("{v:.4}")).collect()],
            0,
        );

        s += "\nRandom effects:\n";
        s += &self.render_random();
        let groups: Vec<String> = self.groups.iter().map(|g| format!("{}, {}", g.group, g.levels)).collect();
        let _ = writeln!(s, "Number of obs: {}, groups:  {}", self.nobs, groups.join("; "));

        s += "\nFixed effects:\n";
        let rows: Vec<Vec<String>> = self
            .fixed
            .iter()
            .map(|r| vec![r.name.clone(), signif(r.estimate, 6), signif(r.std_error, 4), format!("{:.2}", r.t_value)])
            .collect();
        s += &grid(&["", "Estimate", "Std. Error", "t value"], &rows, 1);

        if self.fixed.len() > 1 {
            s += "\nCorrelation of Fixed Effects:\n";
            let abbrev: Vec<String> = self.fixed.iter().map(|r| abbreviate(&r.name)).collect();
            let mut header = vec![""];
            header.extend(abbrev[..abbrev.len() - 1].iter().map(String::as_str));
            let rows: Vec<Vec<String>> = (1..self.fixed.len())
                .map(|i| {
                    let mut row = vec![abbrev[i].clone()];
                    row.extend((0..i).map(|j| format!("{:.3}", self.fixed_correlation[i][j])));
                    row
                })
                .collect();
            s += &grid(&header, &rows, 1);
        }
        if self.singular {
            s += "boundary (singular) fit\n";
        }
        if !self.converged {
            s += "warning: the optimizer stopped before converging\n";
        }
        s
    }

    fn render_random(&self) -> String {
        let mut rows = Vec::new();
        let mut i = 0;
        let recs = &self.varcorr;
        while i < recs.len() {
            let grp = &recs[i].grp;
            let block: Vec<&VcRecord> = recs[i..].iter().take_while(|r| &r.grp == grp).collect();
            i += block.len();
            let vars: Vec<&VcRecord> = block.iter().copied().filter(|r| r.var2.is_none()).collect();
            let names: Vec<String> = vars.iter().map(|r| r.var1.clone().unwrap_or_default()).collect();
            for (k, v) in vars.iter().enumerate() {
                let mut row = vec![
                    if k == 0 { grp.clone() } else { String::new() },
                    names[k].clone(),
                    signif(v.vcov, 5),
                    signif(v.sdcor, 5),
                ];
                for name in &names[..k] {
                    let c = block
                        .iter()
                        .find(|r| {
                            r.var1.as_deref() == Some(name.as_str()) && r.var2.as_deref() == Some(names[k].as_str())
                        })
                        .map_or(String::new(), |r| format!("{:.2}", r.sdcor));
                    row.push(c);
                }
                rows.push(row);
            }
            if vars.is_empty() {
                rows.push(vec![grp.clone(), String::new(), signif(block[0].vcov, 5), signif(block[0].sdcor, 5)]);
            }
        }
        let ncorr = rows.iter().map(|r| r.len()).max().unwrap_or(4).saturating_sub(4);
        let mut header = vec!["Groups", "Name", "Variance", "Std.Dev."];
        if ncorr > 0 {
            header.push("Corr");
            header.extend(std::iter::repeat_n("", ncorr - 1));
        }
        grid(&header, &rows, 2)
    }
}

/// Short column labels for the correlation table: drops lower-case vowels,
/// then other lower-case letters, from the right (never the first character).
fn abbreviate(name: &str) -> String {
    let (inner, wrap) = match name.strip_prefix('(').and_then(|n| n.strip_suffix(')')) {
        Some(inner) => (inner, true),
        None => (name, false),
    };
    let min = if wrap { 4 } else { 6 };
    let mut chars: Vec<char> = inner.chars().filter(|c| !c.is_whitespace()).collect();
    for pass in [|c: char| "aeiou".contains(c), |c: char| c.is_lowercase()] {
        let mut k = chars.len();
        while chars.len() > min && k > 1 {
            k -= 1;
            if pass(chars[k]) {
                chars.remove(k);
            }
        }
    }
    chars.truncate(min.max(1));
    let s: String = chars.into_iter().collect();
    if wrap {
        format!("({s})")
    } else {
        s
    }
}

impl ProfileReport {
    fn render(&self) -> String {
        let mut s = format!("Profile confidence intervals ({}):\n", self.formula);
        s += &interval_rows(&self.intervals, self.level);
        let _ = writeln!(s, "\nProfile points (cutoff |zeta| = {:.4}):", self.cutoff);
        let rows: Vec<Vec<String>> = self
            .profiles
            .iter()
            .flat_map(|p| {
                p.points.iter().map(move |pt| vec![p.name.clone(), format!("{:.5}", pt.zeta), signif(pt.value, 7)])
            })
            .collect();
        s += &grid(&[".par", ".zeta", "value"], &rows, 1);
        s
    }
}

impl BootReport {
    fn render(&self) -> String {
        let mut s = format!(
            "Parametric bootstrap ({}): {} replicates, seed {}, {} failed\n\n",
            self.formula, self.nsim, self.seed, self.failures
        );
        let n = self.draws.len() as f64;
        let rows: Vec<Vec<String>> = self
            .names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let mean = self.draws.iter().map(|d| d[k]).sum::<f64>() / n;
                let var = self.draws.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                vec![
                    name.clone(),
                    signif(self.estimates[k], 6),
                    signif(mean - self.estimates[k], 4),
                    signif(var.sqrt(), 4),
                ]
            })
            .collect();
        s += &grid(&["", "original", "bias", "std. error"], &rows, 1);
        s += "\nPercentile intervals:\n";
        s += &interval_rows(&self.intervals, self.level);
        s += "\nReplicates:\n";
        let mut header = vec!["replicate"];
        header.extend(self.names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = self
            .draws
            .iter()
            .enumerate()
            .map(|(i, d)| std::iter::once((i + 1).to_string()).chain(d.iter().map(|v| signif(*v, 7))).collect())
            .collect();
        s += &grid(&header, &rows, 0);
        s
    }
}

impl AnovaReport {
    fn render(&self) -> String {
        let mut s = format!("Analysis of Variance Table ({})\n", self.formula);
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.term.clone(), r.df.to_string(), signif(r.sum_sq, 6), signif(r.mean_sq, 6), signif(r.f, 4)])
            .collect();
        s += &grid(&["", "npar", "Sum Sq", "Mean Sq", "F value"], &rows, 1);
        s
    }
}

impl CompareReport {
    fn render(&self) -> String {
        let mut s = String::from("Models:\n");
        for m in &self.models {
            let _ = writeln!(s, "{}: {}", m.name, m.formula);
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.df.to_string(),
                    format!("{:.1}", r.aic),
                    format!("{:.1}", r.bic),
                    format!("{:.2}", r.log_lik),
                    format!("{:.1}", r.deviance),
                    r.chisq.map_or(String::new(), |c| format!("{c:.4}")),
                    r.chi_df.map_or(String::new(), |d| d.to_string()),
                    r.p.map_or(String::new(), pvalue),
                    r.p.map_or("", stars).to_string(),
                ]
            })
            .collect();
        s += &grid(&["", "npar", "AIC", "BIC", "logLik", "deviance", "Chisq", "Df", "Pr(>Chisq)", ""], &rows, 1);
        s
    }
}

impl SimulateReport {
    fn render(&self) -> String {
        let names: Vec<String> = (1..=self.nsim).map(|k| format!("sim_{k}")).collect();
        let mut header = vec!["row"];
        header.extend(names.iter().map(String::as_str));
        let n = self.draws.first().map_or(0, Vec::len);
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| std::iter::once((i + 1).to_string()).chain(self.draws.iter().map(|d| signif(d[i], 7))).collect())
            .collect();
        grid(&header, &rows, 0)
    }
}
