//! Structural differences between a true and a learned DAG.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StructureDiff {
    /// Edges only in the learned graph, as oriented there.
    pub extra: BTreeSet<(usize, usize)>,
    /// Edges only in the truth.
    pub missing: BTreeSet<(usize, usize)>,
    /// Truth edges that the learned graph has the other way round.
    pub reversed: BTreeSet<(usize, usize)>,
}

impl StructureDiff {
    pub fn shd(&self) -> usize {
        self.extra.len() + self.missing.len() + self.reversed.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    Exact,
    OffByOne,
    Worse,
}

pub fn diff(truth: &Dag, learned: &Dag) -> Result<StructureDiff> {
    if truth.variables().names() != learned.variables().names() {
        return Err(Error::VariableMismatch);
    }
    let mut d = StructureDiff::default();
    for (a, b) in truth.edges() {
        if learned.has_edge(a, b) {
            continue;
        }
        if learned.has_edge(b, a) {
            d.reversed.insert((a, b));
        } else {
            d.missing.insert((a, b));
        }
    }
    for (a, b) in learned.edges() {
        if !truth.adjacent(a, b) {
            d.extra.insert((a, b));
        }
    }
    Ok(d)
}

pub fn classify(truth: &Dag, learned: &Dag) -> Result<Recovery> {
    Ok(match diff(truth, learned)?.shd() {
        0 => Recovery::Exact,
        1 => Recovery::OffByOne,
        _ => Recovery::Worse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{enumerate_dags, VariableSet};
    use std::collections::{HashMap, VecDeque};
    use std::sync::Arc;

    fn g(n: usize, edges: &[(usize, usize)]) -> Dag {
        Dag::from_edges(Arc::new(VariableSet::numbered(n)), edges).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(diff(&g(2, &[(0, 1)]), &g(2, &[(0, 1)])).unwrap().shd(), 0);
        let d = diff(&g(2, &[(0, 1)]), &g(2, &[(1, 0)])).unwrap();
        assert_eq!(d.reversed.len(), 1);
        assert_eq!(d.shd(), 1);
        let d = diff(&g(3, &[(0, 1)]), &g(3, &[(0, 1), (0, 2)])).unwrap();
        assert_eq!(d.extra, BTreeSet::from([(0, 2)]));
        assert_eq!(classify(&g(2, &[(0, 1)]), &g(2, &[(1, 0)])).unwrap(), Recovery::OffByOne);
        assert_eq!(classify(&g(3, &[(0, 1)]), &g(3, &[(0, 2)])).unwrap(), Recovery::Worse);
        assert!(diff(&g(2, &[]), &g(3, &[])).is_err());
    }

    /// Encodes a graph as one state per unordered pair: 0 none, 1 low->high,
    /// 2 high->low.
    fn encode(d: &Dag) -> Vec<u8> {
        let n = d.n_nodes();
        let mut s = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                s.push(if d.has_edge(a, b) {
                    1
                } else if d.has_edge(b, a) {
                    2
                } else {
                    0
                });
            }
        }
        s
    }

    /// Fewest single add / delete / reverse edits between two graphs, by
    /// breadth-first search over edge states.
    fn edit_distances(from: &[u8]) -> HashMap<Vec<u8>, usize> {
        let mut dist = HashMap::from([(from.to_vec(), 0usize)]);
        let mut queue = VecDeque::from([from.to_vec()]);
        while let Some(s) = queue.pop_front() {
            let ds = dist[&s];
            for i in 0..s.len() {
                for v in 0..3u8 {
                    if v == s[i] {
                        continue;
                    }
                    let mut t = s.clone();
                    t[i] = v;
                    if !dist.contains_key(&t) {
                        dist.insert(t.clone(), ds + 1);
                        queue.push_back(t);
                    }
                }
            }
        }
        dist
    }

    #[test]
    fn shd_matches_minimal_edit_count() {
        for n in 1..=4 {
            let dags: Vec<Dag> = enumerate_dags(n).unwrap().collect();
            for a in &dags {
                let dist = edit_distances(&encode(a));
                for b in &dags {
                    let d = diff(a, b).unwrap();
                    assert_eq!(d.shd(), dist[&encode(b)]);
                    assert_eq!(d.shd(), diff(b, a).unwrap().shd());
                    assert_eq!(d.shd() == 0, a == b);
                    for r in &d.reversed {
                        assert!(!d.extra.contains(r) && !d.missing.contains(r));
                    }
                }
            }
        }
    }
}
