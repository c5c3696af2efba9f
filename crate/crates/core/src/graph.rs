//! Labeled directed acyclic graphs over a fixed, ordered variable set.
//!
//! Node identity is the index into the [`VariableSet`]; names only matter for
//! presentation and serialization. Parent sets are stored as bit masks, which
//! caps a graph at [`MAX_NODES`] variables.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 64;

/// Largest node count accepted by [`enumerate_dags`].
pub const MAX_ENUMERATE: usize = 5;

/// Ordered, duplicate-free variable names. Order defines column indices.
#[derive(Clone, PartialEq, Eq)]
pub struct VariableSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VariableSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::DuplicateVariable(n.clone()));
            }
        }
        Ok(VariableSet { names, index })
    }

    /// `X1..Xn`.
    pub fn numbered(n: usize) -> Self {
        VariableSet::new((1..=n).map(|i| format!("X{i}"))).expect("generated names are unique")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Subset keeping the given indices in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        VariableSet::new(idx.iter().map(|&i| self.names[i].clone()))
            .expect("subset of unique names is unique")
    }
}

impl fmt::Debug for VariableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.names).finish()
    }
}

/// Iterate the set bits of a mask in increasing order.
#[inline]
pub fn mask_iter(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

#[inline]
pub(crate) fn bit(i: usize) -> u64 {
    1u64 << i
}

/// A directed acyclic graph. Acyclicity is checked whenever an edge is
/// introduced, so every value of this type is a valid DAG.
#[derive(Clone, PartialEq, Eq)]
pub struct Dag {
    vars: Arc<VariableSet>,
    parents: Vec<u64>,
}

impl Dag {
    pub fn empty(vars: Arc<VariableSet>) -> Result<Self> {
        if vars.len() > MAX_NODES {
            return Err(Error::SizeLimit {
                what: "node count",
                got: vars.len(),
                max: MAX_NODES,
            });
        }
        let n = vars.len();
        Ok(Dag {
            vars,
            parents: vec![0; n],
        })
    }

    pub fn from_edges(vars: Arc<VariableSet>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut dag = Dag::empty(vars)?;
        for &(p, c) in edges {
            dag.insert_edge(p, c)?;
        }
        Ok(dag)
    }

    pub fn from_named_edges(vars: Arc<VariableSet>, edges: &[(&str, &str)]) -> Result<Self> {
        let idx = edges
            .iter()
            .map(|(p, c)| Ok((vars.require(p)?, vars.require(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Dag::from_edges(vars, &idx)
    }

    /// Build from parent masks; fails if the masks describe a cyclic graph.
    pub fn from_parent_masks(vars: Arc<VariableSet>, parents: Vec<u64>) -> Result<Self> {
        let mut dag = Dag::empty(vars)?;
        assert_eq!(parents.len(), dag.parents.len(), "one mask per node");
        for (c, &m) in parents.iter().enumerate() {
            for p in mask_iter(m) {
                dag.insert_edge(p, c)?;
            }
        }
        Ok(dag)
    }

    pub fn variables(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn parent_mask(&self, v: usize) -> u64 {
        self.parents[v]
    }

    pub fn parent_masks(&self) -> &[u64] {
        &self.parents
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        mask_iter(self.parents[v]).collect()
    }

    pub fn has_edge(&self, p: usize, c: usize) -> bool {
        self.parents[c] & bit(p) != 0
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(|m| m.count_ones() as usize).sum()
    }

    /// Edges as (parent, child), sorted by index.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for (c, &m) in self.parents.iter().enumerate() {
            out.extend(mask_iter(m).map(|p| (p, c)));
        }
        out.sort_unstable();
        out
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges().into_iter().collect()
    }

    /// True when a directed path `from -> ... -> to` exists.
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        reaches(&self.parents, from, to)
    }

    /// A topological order; ties resolved by lowest index first.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_order_masks(&self.parents).expect("Dag invariant: acyclic")
    }

    fn check_pair(&self, p: usize, c: usize) -> Result<()> {
        let n = self.n_nodes();
        if p >= n || c >= n {
            return Err(Error::UnknownVariable(format!("index {}", p.max(c))));
        }
        if p == c {
            return Err(Error::SelfLoop(self.vars.name(p).to_string()));
        }
        Ok(())
    }

    fn insert_edge(&mut self, p: usize, c: usize) -> Result<()> {
        self.check_pair(p, c)?;
        if self.has_edge(p, c) {
            return Err(Error::DuplicateEdge {
                parent: self.vars.name(p).to_string(),
                child: self.vars.name(c).to_string(),
            });
        }
        if self.reaches(c, p) {
            return Err(Error::Cycle {
                parent: self.vars.name(p).to_string(),
                child: self.vars.name(c).to_string(),
            });
        }
        self.parents[c] |= bit(p);
        Ok(())
    }

    /// New graph with `parent -> child` added.
    pub fn add_edge_checked(&self, parent: usize, child: usize) -> Result<Dag> {
        let mut g = self.clone();
        g.insert_edge(parent, child)?;
        Ok(g)
    }

    /// New graph without `parent -> child` (no-op if absent).
    pub fn without_edge(&self, parent: usize, child: usize) -> Dag {
        let mut g = self.clone();
        g.parents[child] &= !bit(parent);
        g
    }

    /// New graph with `parent -> child` replaced by `child -> parent`.
    pub fn reverse_edge_checked(&self, parent: usize, child: usize) -> Result<Dag> {
        self.without_edge(parent, child).add_edge_checked(child, parent)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DagJson::from(self)).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Dag> {
        let j: DagJson = serde_json::from_str(s)?;
        j.into_dag()
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self
            .edges()
            .into_iter()
            .map(|(p, c)| format!("{}->{}", self.vars.name(p), self.vars.name(c)))
            .collect();
        write!(f, "Dag{{{}}}", edges.join(", "))
    }
}

pub(crate) fn reaches(parents: &[u64], from: usize, to: usize) -> bool {
    if from == to {
        return true;
    }
    // walk backwards from `to` through parents looking for `from`
    let mut seen = bit(to);
    let mut frontier = bit(to);
    while frontier != 0 {
        let mut next = 0u64;
        for v in mask_iter(frontier) {
            next |= parents[v];
        }
        if next & bit(from) != 0 {
            return true;
        }
        next &= !seen;
        seen |= next;
        frontier = next;
    }
    false
}

/// Kahn's algorithm on parent masks; `None` when cyclic.
pub(crate) fn topological_order_masks(parents: &[u64]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut placed = 0u64;
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&v| placed & bit(v) == 0 && parents[v] & !placed == 0)?;
        placed |= bit(next);
        order.push(next);
    }
    Some(order)
}

/// Serialized form: variables in column order, edges as name pairs sorted
/// lexicographically so output is byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagJson {
    pub variables: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

impl From<&Dag> for DagJson {
    fn from(g: &Dag) -> Self {
        let mut edges: Vec<[String; 2]> = g
            .edges()
            .into_iter()
            .map(|(p, c)| [g.vars.name(p).to_string(), g.vars.name(c).to_string()])
            .collect();
        edges.sort();
        DagJson {
            variables: g.vars.names().to_vec(),
            edges,
        }
    }
}

impl DagJson {
    pub fn into_dag(self) -> Result<Dag> {
        let vars = Arc::new(VariableSet::new(self.variables)?);
        let edges: Vec<(&str, &str)> = self
            .edges
            .iter()
            .map(|[p, c]| (p.as_str(), c.as_str()))
            .collect();
        Dag::from_named_edges(vars, &edges)
    }
}

/// Every labeled DAG on `n` nodes named `X1..Xn`, each exactly once.
pub fn enumerate_dags(n: usize) -> Result<impl Iterator<Item = Dag>> {
    enumerate_dags_over(Arc::new(VariableSet::numbered(n)))
}

/// Every labeled DAG over the given variables.
pub fn enumerate_dags_over(vars: Arc<VariableSet>) -> Result<impl Iterator<Item = Dag>> {
    let n = vars.len();
    if n > MAX_ENUMERATE {
        return Err(Error::SizeLimit {
            what: "node count for enumeration",
            got: n,
            max: MAX_ENUMERATE,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    let total = 3u64.pow(pairs.len() as u32);
    Ok((0..total).filter_map(move |mut code| {
        // each unordered pair is absent, a->b, or b->a
        let mut parents = vec![0u64; n];
        for &(a, b) in &pairs {
            match code % 3 {
                1 => parents[b] |= bit(a),
                2 => parents[a] |= bit(b),
                _ => {}
            }
            code /= 3;
        }
        topological_order_masks(&parents)?;
        Some(Dag {
            vars: Arc::clone(&vars),
            parents,
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools_free::permutations;

    mod itertools_free {
        pub fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
    }

    fn vars(names: &[&str]) -> Arc<VariableSet> {
        Arc::new(VariableSet::new(names.iter().copied()).unwrap())
    }

    fn respects(g: &Dag, order: &[usize]) -> bool {
        let pos: Vec<usize> = {
            let mut p = vec![0; order.len()];
            for (i, &v) in order.iter().enumerate() {
                p[v] = i;
            }
            p
        };
        g.edges().iter().all(|&(u, v)| pos[u] < pos[v])
    }

    /// a(n) = sum_k (-1)^(k+1) C(n,k) 2^(k(n-k)) a(n-k)
    fn dag_count(n: usize) -> u64 {
        fn binom(n: u64, k: u64) -> u64 {
            (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
        }
        let mut a = vec![1i64; n + 1];
        for m in 1..=n {
            let mut s = 0i64;
            for k in 1..=m {
                let term = binom(m as u64, k as u64) as i64 * (1i64 << (k * (m - k))) * a[m - k];
                s += if k % 2 == 1 { term } else { -term };
            }
            a[m] = s;
        }
        a[n] as u64
    }

    #[test]
    fn variable_names_must_be_unique() {
        assert!(matches!(
            VariableSet::new(["a", "b", "a"]),
            Err(Error::DuplicateVariable(_))
        ));
    }

    #[test]
    fn topological_order_examples() {
        let v = vars(&["A", "B", "C"]);
        let empty = Dag::empty(v.clone()).unwrap();
        let mut o = empty.topological_order();
        o.sort();
        assert_eq!(o, vec![0, 1, 2]);

        let chain = Dag::from_named_edges(v.clone(), &[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(chain.topological_order(), vec![0, 1, 2]);

        let collider = Dag::from_named_edges(v, &[("A", "C"), ("B", "C")]).unwrap();
        let valid: Vec<Vec<usize>> = permutations(3)
            .into_iter()
            .filter(|p| respects(&collider, p))
            .collect();
        assert_eq!(valid.len(), 2);
        assert!(valid.contains(&collider.topological_order()));
        assert!(valid.iter().all(|p| p[2] == 2));
    }

    #[test]
    fn add_edge_checked_examples() {
        let v = vars(&["A", "B", "C"]);
        let chain = Dag::from_named_edges(v, &[("A", "B")]).unwrap();
        assert!(matches!(chain.add_edge_checked(1, 0), Err(Error::Cycle { .. })));
        assert!(matches!(
            chain.add_edge_checked(0, 1),
            Err(Error::DuplicateEdge { .. })
        ));
        let g = chain.add_edge_checked(1, 2).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert!(matches!(g.add_edge_checked(2, 0), Err(Error::Cycle { .. })));
        assert!(matches!(g.add_edge_checked(1, 1), Err(Error::SelfLoop(_))));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_dags(1).unwrap().count(), 1);
        assert_eq!(enumerate_dags(2).unwrap().count(), 3);
        for n in 1..=5 {
            let all: Vec<Dag> = enumerate_dags(n).unwrap().collect();
            assert_eq!(all.len() as u64, dag_count(n), "n = {n}");
            let distinct: std::collections::HashSet<Vec<u64>> =
                all.iter().map(|g| g.parent_masks().to_vec()).collect();
            assert_eq!(distinct.len(), all.len());
            for g in &all {
                assert!(respects(g, &g.topological_order()));
            }
        }
        assert_eq!(dag_count(3), 25);
        assert_eq!(dag_count(4), 543);
        assert!(matches!(enumerate_dags(6), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn json_is_sorted_and_round_trips() {
        let v = vars(&["b", "a", "c"]);
        let g = Dag::from_named_edges(v, &[("c", "a"), ("b", "a"), ("b", "c")]).unwrap();
        let s = g.to_json();
        let j: DagJson = serde_json::from_str(&s).unwrap();
        assert_eq!(
            j.edges,
            vec![
                ["b".to_string(), "a".to_string()],
                ["b".to_string(), "c".to_string()],
                ["c".to_string(), "a".to_string()]
            ]
        );
        assert_eq!(Dag::from_json(&s).unwrap(), g);
    }

    #[test]
    fn cyclic_json_rejected() {
        let s = r#"{"variables":["a","b"],"edges":[["a","b"],["b","a"]]}"#;
        assert!(Dag::from_json(s).is_err());
    }
}
