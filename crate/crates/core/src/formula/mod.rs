//! Mixed-model formulas: `resp ~ fixed + (lhs | group)`.
//!
//! [`parse_formula`] produces a [`Formula`] in source order; [`rewrite`]
//! expands nesting (`a/b`) and uncorrelated (`||`) terms into plain
//! correlated terms. Two printers are provided: [`Formula::canonical`] spells
//! out the intercept (`y ~ 1 + x + (1 + x | g)`) and is stable under
//! re-parsing, while `Display` uses the conventional compact form
//! (`y ~ x + (x | g)`).

mod parse;
mod rewrite;

use std::fmt;

pub use parse::{parse_formula, update_formula};
pub use rewrite::rewrite;

/// A fixed-effects term: one covariate or an interaction `a:b:...`.
pub type Interaction = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub response: String,
    pub fixed: FixedPart,
    pub random: Vec<RandomTerm>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPart {
    pub intercept: bool,
    pub terms: Vec<Interaction>,
    pub offsets: Vec<String>,
}

/// Left-hand side of a random-effects term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReLhs {
    pub intercept: bool,
    pub covariates: Vec<String>,
}

impl ReLhs {
    /// Number of random-effect columns per level.
    pub fn ncol(&self) -> usize {
        usize::from(self.intercept) + self.covariates.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Grouping {
    /// `g` or `a:b:...`; a plain factor has one part.
    Factor(Vec<String>),
    /// `a/b/...`, expanded by [`rewrite`].
    Nested(Vec<String>),
}

impl Grouping {
    pub fn single(name: &str) -> Self {
        Grouping::Factor(vec![name.to_string()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RandomTerm {
    pub lhs: ReLhs,
    pub grouping: Grouping,
    /// `false` when written with `||`.
    pub correlated: bool,
}

impl Formula {
    /// Every column name the formula reads from a data table.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |s: &String| {
            if !out.contains(s) {
                out.push(s.clone());
            }
        };
        push(&self.response);
        self.fixed.terms.iter().flatten().for_each(&mut push);
        self.fixed.offsets.iter().for_each(&mut push);
        for t in &self.random {
            t.lhs.covariates.iter().for_each(&mut push);
            match &t.grouping {
                Grouping::Factor(p) | Grouping::Nested(p) => p.iter().for_each(&mut push),
            }
        }
        out
    }

    /// Explicit form, e.g. `y ~ 1 + x + offset(o) + (1 + x | g)`.
    pub fn canonical(&self) -> String {
        let mut parts = vec![if self.fixed.intercept { "1" } else { "0" }.to_string()];
        parts.extend(self.fixed.terms.iter().map(|t| t.join(":")));
        parts.extend(self.fixed.offsets.iter().map(|o| format!("offset({o})")));
        for t in &self.random {
            let mut lhs = vec![if t.lhs.intercept { "1" } else { "0" }.to_string()];
            lhs.extend(t.lhs.covariates.iter().cloned());
            let bar = if t.correlated { "|" } else { "||" };
            parts.push(format!("({} {} {})", lhs.join(" + "), bar, t.grouping));
        }
        format!("{} ~ {}", self.response, parts.join(" + "))
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::Factor(p) => write!(f, "{}", p.join(":")),
            Grouping::Nested(p) => write!(f, "{}", p.join("/")),
        }
    }
}

impl fmt::Display for ReLhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.covariates.is_empty() {
            return f.write_str(if self.intercept { "1" } else { "0" });
        }
        if !self.intercept {
            f.write_str("0 + ")?;
        }
        f.write_str(&self.covariates.join(" + "))
    }
}

impl fmt::Display for RandomTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bar = if self.correlated { "|" } else { "||" };
        write!(f, "({} {} {})", self.lhs, bar, self.grouping)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        let mut model: Vec<String> = self.fixed.terms.iter().map(|t| t.join(":")).collect();
        if !self.fixed.intercept {
            parts.push("0".into());
        } else if model.is_empty() {
            parts.push("1".into());
        }
        parts.append(&mut model);
        parts.extend(self.fixed.offsets.iter().map(|o| format!("offset({o})")));
        parts.extend(self.random.iter().map(|t| t.to_string()));
        write!(f, "{} ~ {}", self.response, parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_is_compact() {
        let f = parse_formula("Reaction ~ 1 + Days + (1 | Subject)").unwrap();
        assert_eq!(f.to_string(), "Reaction ~ Days + (1 | Subject)");
        let f = parse_formula("y ~ -1 + offset(o) + (0 + x || g)").unwrap();
        assert_eq!(f.to_string(), "y ~ 0 + offset(o) + (0 + x || g)");
    }

    #[test]
    fn canonical_spells_out_intercepts() {
        let f = parse_formula("y ~ x + (x|g1/g2)").unwrap();
        assert_eq!(f.canonical(), "y ~ 1 + x + (1 + x | g1/g2)");
    }

    #[test]
    fn variables_in_first_use_order() {
        let f = parse_formula("y ~ a:b + offset(o) + (x | g1:g2)").unwrap();
        assert_eq!(f.variables(), ["y", "a", "b", "o", "x", "g1", "g2"]);
    }
}
