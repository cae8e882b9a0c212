use super::{Formula, Grouping, RandomTerm, ReLhs};

fn expand_nesting(g: &Grouping) -> Vec<Grouping> {
    match g {
        Grouping::Factor(_) => vec![g.clone()],
        Grouping::Nested(parts) => (1..=parts.len()).map(|k| Grouping::Factor(parts[..k].to_vec())).collect(),
    }
}

fn split_uncorrelated(lhs: &ReLhs) -> Vec<ReLhs> {
    let mut out = Vec::new();
    if lhs.intercept {
        out.push(ReLhs { intercept: true, covariates: Vec::new() });
    }
    for c in &lhs.covariates {
        out.push(ReLhs { intercept: false, covariates: vec![c.clone()] });
    }
    out
}

/// Expands `(e | a/b)` into `(e | a) + (e | a:b)` and `(x || g)` into
/// `(1 | g) + (0 + x | g)`. Idempotent; the result has only correlated terms
/// with plain or interaction grouping.
pub fn rewrite(f: &Formula) -> Formula {
    let mut random: Vec<RandomTerm> = Vec::new();
    for t in &f.random {
        let lhss = if t.correlated { vec![t.lhs.clone()] } else { split_uncorrelated(&t.lhs) };
        for g in expand_nesting(&t.grouping) {
            for lhs in &lhss {
                let term = RandomTerm { lhs: lhs.clone(), grouping: g.clone(), correlated: true };
                if !random.contains(&term) {
                    random.push(term);
                }
            }
        }
    }
    Formula { random, ..f.clone() }
}
