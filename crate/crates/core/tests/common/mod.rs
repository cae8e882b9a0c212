#![allow(dead_code)]

pub mod rstream;

use lmmfit::data::DataTable;

pub const SLEEPSTUDY_CSV: &str = include_str!("../../../cli/data/sleepstudy.csv");

pub fn sleepstudy() -> DataTable {
    let mut reaction = Vec::new();
    let mut days = Vec::new();
    let mut subject = Vec::new();
    for line in SLEEPSTUDY_CSV.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        reaction.push(f[0].parse::<f64>().unwrap());
        days.push(f[1].parse::<f64>().unwrap());
        subject.push(f[2].to_string());
    }
    DataTable::new()
        .with_numeric("Reaction", reaction)
        .unwrap()
        .with_numeric("Days", days)
        .unwrap()
        .with_categorical("Subject", &subject)
        .unwrap()
}

/// Small grouped data set: `y`, `x`, `w`, `o` numeric and `g` with `nlevels`
/// levels, every level used at least once.
pub fn toy(n: usize, nlevels: usize, cells: &[f64]) -> DataTable {
    let at = |k: usize| cells[k % cells.len()];
    let g: Vec<String> = (0..n)
        .map(|i| {
            let c = if i < nlevels { i } else { (at(i) * 1e3) as usize % nlevels };
            format!("g{c}")
        })
        .collect();
    let x: Vec<f64> = (0..n).map(|i| 2.0 * at(3 * i + 1) - 1.0).collect();
    let y: Vec<f64> = (0..n).map(|i| 3.0 * at(3 * i + 2) + x[i]).collect();
    let w: Vec<f64> = (0..n).map(|i| 0.5 + 1.5 * at(5 * i + 3)).collect();
    let o: Vec<f64> = (0..n).map(|i| 0.3 * at(7 * i + 4)).collect();
    DataTable::new()
        .with_numeric("y", y)
        .unwrap()
        .with_numeric("x", x)
        .unwrap()
        .with_numeric("w", w)
        .unwrap()
        .with_numeric("o", o)
        .unwrap()
        .with_categorical("g", &g)
        .unwrap()
}

pub const TOY_FORMULAS: [&str; 4] = ["y ~ x + (1|g)", "y ~ x + (x|g)", "y ~ 1 + (x||g)", "y ~ 0 + x + (1|g)"];

/// θ inside the box: diagonal entries in (0.1, 2), others in (−1, 1).
pub fn interior_theta(lower: &[f64], raw: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let r = raw[k % raw.len()];
            if l == 0.0 {
                0.1 + 1.9 * r
            } else {
                2.0 * r - 1.0
            }
        })
        .collect()
}
