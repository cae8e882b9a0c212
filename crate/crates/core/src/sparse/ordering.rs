//! Fill-reducing orderings.

use std::collections::BTreeSet;

use super::csc::SparseCsc;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Identity permutation.
    #[default]
    Natural,
    /// Greedy minimum degree on the elimination graph.
    MinimumDegree,
    /// A caller-supplied permutation (`perm[k]` = original index at position `k`).
    Given(Vec<usize>),
}

/// Greedy minimum-degree ordering of a symmetric pattern (any triangle or both).
///
/// Ties are broken by the smallest original index, so the result is
/// deterministic.
pub fn minimum_degree(a: &SparseCsc) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in 0..n {
        for &i in a.col_rows(j) {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut by_degree: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some((_, v)) = by_degree.pop_first() {
        perm.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            by_degree.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        // eliminating v turns its neighbourhood into a clique
        for (k, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[k + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            by_degree.insert((adj[u].len(), u));
        }
    }
    perm
}
