use serde::{Deserialize, Serialize};

use super::{hill_climb_restricted, CiTest, FamilyScorer, HcConfig, HcOutcome};
use crate::error::{Error, Result};
use crate::graph::{bit, mask_iter, MAX_NODES};

/// Largest conditioning candidate set whose subsets are searched exhaustively.
const MAX_SUBSET_SEARCH: usize = 12;

/// Symmetric set of unordered node pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    adj: Vec<u64>,
}

impl PairSet {
    pub fn new(n: usize) -> Self {
        assert!(n <= MAX_NODES);
        PairSet { adj: vec![0; n] }
    }

    pub fn complete(n: usize) -> Self {
        let mut s = PairSet::new(n);
        for a in 0..n {
            for b in (a + 1)..n {
                s.insert(a, b);
            }
        }
        s
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn insert(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a] |= bit(b);
            self.adj[b] |= bit(a);
        }
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.adj[a] & bit(b) != 0
    }

    pub fn neighbours(&self, a: usize) -> Vec<usize> {
        mask_iter(self.adj[a]).collect()
    }

    /// Pairs as `(a, b)` with `a < b`, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.adj.len() {
            for b in mask_iter(self.adj[a]) {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.pairs().len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.iter().all(|&m| m == 0)
    }
}

/// Constraint-based step of a hybrid learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restrict {
    /// Grow-shrink Markov blankets.
    Gs,
    /// Max-min parents and children.
    Mmpc,
}

impl Restrict {
    pub fn name(self) -> &'static str {
        match self {
            Restrict::Gs => "gs",
            Restrict::Mmpc => "mmpc",
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_NODES {
        return Err(Error::SizeLimit {
            what: "nodes",
            got: n,
            max: MAX_NODES,
        });
    }
    Ok(())
}

/// Calls `f` on each subset of `items` (smallest first) until it returns
/// true. Returns whether any call did.
fn any_subset(items: &[usize], mut f: impl FnMut(&[usize]) -> Result<bool>) -> Result<bool> {
    let k = items.len().min(MAX_SUBSET_SEARCH);
    let items = &items[..k];
    let mut codes: Vec<u32> = (0..(1u32 << k)).collect();
    codes.sort_by_key(|c| (c.count_ones(), *c));
    let mut buf = Vec::with_capacity(k);
    for code in codes {
        buf.clear();
        buf.extend((0..k).filter(|i| code & (1 << i) != 0).map(|i| items[i]));
        if f(&buf)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Grow-shrink: estimate each Markov blanket, then keep a pair as
/// neighbours unless some subset of the smaller of the two blankets
/// separates them.
pub fn restrict_gs(test: &dyn CiTest, alpha: f64) -> Result<PairSet> {
    let p = test.n_vars();
    check_size(p)?;
    let mut blankets: Vec<Vec<usize>> = Vec::with_capacity(p);
    for x in 0..p {
        let mut mb: Vec<usize> = Vec::new();
        let mut grew = true;
        while grew {
            grew = false;
            for y in 0..p {
                if y == x || mb.contains(&y) {
                    continue;
                }
                if test.p_value(x, y, &mb)? < alpha {
                    mb.push(y);
                    grew = true;
                }
            }
        }
        let mut i = 0;
        while i < mb.len() {
            let y = mb[i];
            let rest: Vec<usize> = mb.iter().copied().filter(|&v| v != y).collect();
            if test.p_value(x, y, &rest)? >= alpha {
                mb.remove(i);
            } else {
                i += 1;
            }
        }
        mb.sort_unstable();
        blankets.push(mb);
    }

    let mut out = PairSet::new(p);
    for x in 0..p {
        for y in (x + 1)..p {
            if !blankets[x].contains(&y) && !blankets[y].contains(&x) {
                continue;
            }
            let bx: Vec<usize> = blankets[x].iter().copied().filter(|&v| v != y).collect();
            let by: Vec<usize> = blankets[y].iter().copied().filter(|&v| v != x).collect();
            let t = if bx.len() <= by.len() { bx } else { by };
            let separated = any_subset(&t, |s| Ok(test.p_value(x, y, s)? >= alpha))?;
            if !separated {
                out.insert(x, y);
            }
        }
    }
    Ok(out)
}

/// Largest p-value of `x` and `t` over all conditioning subsets of `cpc`.
fn max_p(test: &dyn CiTest, x: usize, t: usize, cpc: &[usize], alpha: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    any_subset(cpc, |s| {
        worst = worst.max(test.p_value(x, t, s)?);
        Ok(worst >= alpha)
    })?;
    Ok(worst)
}

fn mmpc_one(test: &dyn CiTest, t: usize, alpha: f64) -> Result<Vec<usize>> {
    let p = test.n_vars();
    let mut cpc: Vec<usize> = Vec::new();
    let mut open: Vec<usize> = (0..p).filter(|&v| v != t).collect();
    // forward: admit the candidate whose weakest association is strongest
    loop {
        let mut best: Option<(f64, usize)> = None;
        let mut keep = Vec::with_capacity(open.len());
        for &x in &open {
            let mp = max_p(test, x, t, &cpc, alpha)?;
            if mp < alpha {
                keep.push(x);
                if best.is_none_or(|(b, _)| mp < b) {
                    best = Some((mp, x));
                }
            }
        }
        open = keep;
        let Some((_, x)) = best else {
            break;
        };
        cpc.push(x);
        open.retain(|&v| v != x);
    }
    // backward: drop members separated by a subset of the others
    let mut i = 0;
    while i < cpc.len() {
        let x = cpc[i];
        let rest: Vec<usize> = cpc.iter().copied().filter(|&v| v != x).collect();
        if max_p(test, x, t, &rest, alpha)? >= alpha {
            cpc.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(cpc)
}

/// Max-min parents and children, symmetrized by requiring each endpoint to
/// appear in the other's set.
pub fn restrict_mmpc(test: &dyn CiTest, alpha: f64) -> Result<PairSet> {
    let p = test.n_vars();
    check_size(p)?;
    let pcs: Vec<u64> = (0..p)
        .map(|t| Ok(mmpc_one(test, t, alpha)?.into_iter().fold(0u64, |m, v| m | bit(v))))
        .collect::<Result<_>>()?;
    let mut out = PairSet::new(p);
    for x in 0..p {
        for y in (x + 1)..p {
            if pcs[x] & bit(y) != 0 && pcs[y] & bit(x) != 0 {
                out.insert(x, y);
            }
        }
    }
    Ok(out)
}

/// Restrict candidate pairs with a constraint-based step, then hill climb
/// inside them.
pub fn hybrid_search(
    scorer: &dyn FamilyScorer,
    test: &dyn CiTest,
    restrict: Restrict,
    alpha: f64,
    cfg: &HcConfig,
) -> Result<HcOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", "must lie in (0, 1)"));
    }
    let allowed = match restrict {
        Restrict::Gs => restrict_gs(test, alpha)?,
        Restrict::Mmpc => restrict_mmpc(test, alpha)?,
    };
    hill_climb_restricted(scorer, cfg, &allowed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Independence oracle read off a DAG by d-separation.
    struct DSep {
        parents: Vec<u64>,
    }

    impl DSep {
        fn ancestors(&self, set: u64) -> u64 {
            let mut a = set;
            loop {
                let next = mask_iter(a).fold(a, |m, v| m | self.parents[v]);
                if next == a {
                    return a;
                }
                a = next;
            }
        }

        /// Moralized ancestral graph, then plain reachability avoiding `z`.
        fn separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
            let zm = z.iter().fold(0u64, |m, &v| m | bit(v));
            let anc = self.ancestors(bit(x) | bit(y) | zm);
            let n = self.parents.len();
            let mut adj = vec![0u64; n];
            for v in mask_iter(anc) {
                let pa = self.parents[v] & anc;
                for u in mask_iter(pa) {
                    adj[u] |= bit(v);
                    adj[v] |= bit(u);
                }
                for u in mask_iter(pa) {
                    adj[u] |= pa & !bit(u);
                }
            }
            let mut seen = bit(x);
            let mut stack = vec![x];
            while let Some(v) = stack.pop() {
                for w in mask_iter(adj[v] & !seen & !zm) {
                    if w == y {
                        return false;
                    }
                    seen |= bit(w);
                    stack.push(w);
                }
            }
            true
        }
    }

    impl CiTest for DSep {
        fn n_vars(&self) -> usize {
            self.parents.len()
        }

        fn p_value(&self, x: usize, y: usize, z: &[usize]) -> Result<f64> {
            Ok(if self.separated(x, y, z) { 1.0 } else { 0.0 })
        }
    }

    fn oracle(edges: &[(usize, usize)], n: usize) -> DSep {
        let mut parents = vec![0u64; n];
        for &(a, b) in edges {
            parents[b] |= bit(a);
        }
        DSep { parents }
    }

    fn skeleton(edges: &[(usize, usize)]) -> HashSet<(usize, usize)> {
        edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }

    #[test]
    fn recover_skeleton_under_perfect_independence_oracle() {
        let graphs: Vec<(usize, Vec<(usize, usize)>)> = vec![
            (3, vec![(0, 1), (1, 2)]),
            (3, vec![(0, 2), (1, 2)]),
            (4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]),
            (
                6,
                vec![(0, 1), (0, 2), (3, 2), (3, 1), (1, 4), (4, 5)],
            ),
        ];
        for (n, edges) in graphs {
            let t = oracle(&edges, n);
            let want = skeleton(&edges);
            for got in [restrict_gs(&t, 0.05).unwrap(), restrict_mmpc(&t, 0.05).unwrap()] {
                let got: HashSet<(usize, usize)> = got.pairs().into_iter().collect();
                assert_eq!(got, want, "edges {edges:?}");
            }
        }
    }

    #[test]
    fn pair_set_is_symmetric() {
        let mut s = PairSet::new(4);
        s.insert(3, 1);
        assert!(s.contains(1, 3) && s.contains(3, 1));
        assert_eq!(s.pairs(), vec![(1, 3)]);
        assert_eq!(PairSet::complete(4).len(), 6);
    }
}
