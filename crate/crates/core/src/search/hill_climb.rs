use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{score_masks, FamilyScorer, PairSet, ScoreCache};
use crate::error::{Error, Result};
use crate::graph::{bit, reaches, Dag, MAX_NODES};
use crate::rng::{derive_seed, rng_from};

/// Improvements at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-8;

/// Relative gap under which two deltas count as equal, so score-equivalent
/// moves that differ only by rounding fall to the index tie-break.
const TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HcConfig {
    /// Total number of climbs. The first starts from the empty graph, the
    /// others from a randomly perturbed empty graph.
    pub restarts: usize,
    /// Random legal operations applied before each restarted climb.
    pub perturb: usize,
    pub max_parents: usize,
    pub seed: u64,
}

impl Default for HcConfig {
    fn default() -> Self {
        HcConfig {
            restarts: 1,
            perturb: 5,
            max_parents: 5,
            seed: 0,
        }
    }
}

impl HcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("restarts", "must be at least 1"));
        }
        if self.max_parents == 0 {
            return Err(Error::config("max_parents", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HcOutcome {
    pub dag: Dag,
    pub score: f64,
    /// Accepted moves summed over all climbs.
    pub moves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Delete,
    Reverse,
}

/// Greedy hill climbing over DAGs with add, delete, and reverse moves.
pub fn hill_climb(scorer: &dyn FamilyScorer, cfg: &HcConfig) -> Result<HcOutcome> {
    climb_all(scorer, cfg, None)
}

/// Hill climbing where only pairs in `allowed` may become adjacent.
pub fn hill_climb_restricted(
    scorer: &dyn FamilyScorer,
    cfg: &HcConfig,
    allowed: &PairSet,
) -> Result<HcOutcome> {
    climb_all(scorer, cfg, Some(allowed))
}

fn climb_all(
    scorer: &dyn FamilyScorer,
    cfg: &HcConfig,
    allowed: Option<&PairSet>,
) -> Result<HcOutcome> {
    cfg.validate()?;
    let vars = scorer.variables().clone();
    let n = vars.len();
    if n > MAX_NODES {
        return Err(Error::SizeLimit {
            what: "nodes",
            got: n,
            max: MAX_NODES,
        });
    }
    let mut cache = ScoreCache::new(scorer);
    let mut best: Option<(Vec<u64>, f64)> = None;
    let mut moves = 0;
    for r in 0..cfg.restarts {
        let mut parents = vec![0u64; n];
        if r > 0 {
            let mut rng = rng_from(derive_seed(cfg.seed, r as u64));
            perturb(&mut parents, cfg, allowed, &mut rng);
        }
        let (score, m) = climb(&mut cache, &mut parents, cfg.max_parents, allowed)?;
        moves += m;
        if best.as_ref().is_none_or(|(_, s)| score > *s + MIN_GAIN) {
            best = Some((parents, score));
        }
    }
    let (parents, score) = best.expect("at least one climb");
    if cfg!(debug_assertions) {
        let direct = score_masks(scorer, &parents)?;
        debug_assert!(
            (direct - score).abs() <= 1e-7 * (1.0 + direct.abs()),
            "cached score {score} disagrees with rescoring {direct}"
        );
    }
    Ok(HcOutcome {
        dag: Dag::from_parent_masks(vars, parents)?,
        score,
        moves,
    })
}

fn permitted(allowed: Option<&PairSet>, a: usize, b: usize) -> bool {
    allowed.is_none_or(|p| p.contains(a, b))
}

fn legal_add(parents: &[u64], max_parents: usize, allowed: Option<&PairSet>, u: usize, v: usize) -> bool {
    parents[v] & bit(u) == 0
        && parents[u] & bit(v) == 0
        && (parents[v].count_ones() as usize) < max_parents
        && permitted(allowed, u, v)
        && !reaches(parents, v, u)
}

/// Reversing `u -> v` is legal when `u` can take another parent and no other
/// directed path leads from `u` to `v`.
fn legal_reverse(parents: &mut [u64], max_parents: usize, u: usize, v: usize) -> bool {
    if (parents[u].count_ones() as usize) >= max_parents {
        return false;
    }
    parents[v] &= !bit(u);
    let cyclic = reaches(parents, u, v);
    parents[v] |= bit(u);
    !cyclic
}

fn perturb<R: Rng>(parents: &mut [u64], cfg: &HcConfig, allowed: Option<&PairSet>, rng: &mut R) {
    let n = parents.len();
    if n < 2 {
        return;
    }
    for _ in 0..cfg.perturb {
        let mut candidates: Vec<(usize, usize, Op)> = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                if parents[v] & bit(u) != 0 {
                    candidates.push((u, v, Op::Delete));
                    if legal_reverse(parents, cfg.max_parents, u, v) {
                        candidates.push((u, v, Op::Reverse));
                    }
                } else if legal_add(parents, cfg.max_parents, allowed, u, v) {
                    candidates.push((u, v, Op::Add));
                }
            }
        }
        if candidates.is_empty() {
            return;
        }
        let (u, v, op) = candidates[rng.random_range(0..candidates.len())];
        apply(parents, u, v, op);
    }
}

fn apply(parents: &mut [u64], u: usize, v: usize, op: Op) {
    match op {
        Op::Add => parents[v] |= bit(u),
        Op::Delete => parents[v] &= !bit(u),
        Op::Reverse => {
            parents[v] &= !bit(u);
            parents[u] |= bit(v);
        }
    }
}

/// One greedy climb from `parents`. Moves are scanned by (from, to) with
/// add, delete, reverse order inside a pair; the first strictly best wins.
fn climb(
    cache: &mut ScoreCache<'_>,
    parents: &mut [u64],
    max_parents: usize,
    allowed: Option<&PairSet>,
) -> Result<(f64, usize)> {
    let n = parents.len();
    let mut node_score = Vec::with_capacity(n);
    for (v, &m) in parents.iter().enumerate() {
        node_score.push(cache.get(v, m)?);
    }
    let mut moves = 0;
    loop {
        let mut best: Option<(f64, usize, usize, Op)> = None;
        let mut consider = |delta: f64, u: usize, v: usize, op: Op| {
            if delta > MIN_GAIN && best.is_none_or(|(d, ..)| delta > d + TIE * d.abs().max(1.0)) {
                best = Some((delta, u, v, op));
            }
        };
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                if parents[v] & bit(u) != 0 {
                    let dv = cache.get(v, parents[v] & !bit(u))? - node_score[v];
                    consider(dv, u, v, Op::Delete);
                    if permitted(allowed, v, u) && legal_reverse(parents, max_parents, u, v) {
                        let du = cache.get(u, parents[u] | bit(v))? - node_score[u];
                        consider(dv + du, u, v, Op::Reverse);
                    }
                } else if legal_add(parents, max_parents, allowed, u, v) {
                    let dv = cache.get(v, parents[v] | bit(u))? - node_score[v];
                    consider(dv, u, v, Op::Add);
                }
            }
        }
        let Some((_, u, v, op)) = best else {
            break;
        };
        apply(parents, u, v, op);
        node_score[v] = cache.get(v, parents[v])?;
        node_score[u] = cache.get(u, parents[u])?;
        moves += 1;
    }
    Ok((node_score.iter().sum(), moves))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{fit, simulate};
    use crate::graph::{enumerate_dags, VariableSet};
    use crate::search::GaussianScorer;
    use crate::{gaussian::GaussianBn, Dataset};
    use std::sync::Arc;

    fn chain_data(n: usize, seed: u64) -> Dataset {
        let vars = Arc::new(VariableSet::numbered(3));
        let dag = Dag::from_edges(vars.clone(), &[(0, 1), (1, 2)]).unwrap();
        let x0: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let x1: Vec<f64> = x0.iter().enumerate().map(|(i, v)| v + (i as f64 * 1.3).cos()).collect();
        let x2: Vec<f64> = x1.iter().enumerate().map(|(i, v)| v - (i as f64 * 2.1).sin()).collect();
        let seed_data = Dataset::new(vars, vec![x0, x1, x2]).unwrap();
        let bn: GaussianBn = fit(&dag, &seed_data).unwrap();
        simulate(&bn, n, seed)
    }

    #[test]
    fn reaches_the_exhaustive_optimum_on_small_problem() {
        let data = chain_data(500, 3);
        let scorer = GaussianScorer::new(&data);
        let out = hill_climb(&scorer, &HcConfig::default()).unwrap();
        let best = enumerate_dags(3)
            .unwrap()
            .map(|d| score_masks(&scorer, d.parent_masks()).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((out.score - best).abs() < 1e-9);
        assert_eq!(out.dag.n_edges(), 2);
        assert!(out.dag.adjacent(0, 1) && out.dag.adjacent(1, 2));
    }

    #[test]
    fn respects_max_parents_and_restriction() {
        let data = chain_data(300, 9);
        let scorer = GaussianScorer::new(&data);
        let mut allowed = PairSet::new(3);
        allowed.insert(0, 1);
        let out = hill_climb_restricted(&scorer, &HcConfig::default(), &allowed).unwrap();
        assert_eq!(out.dag.n_edges(), 1);
        assert!(out.dag.adjacent(0, 1));

        let cfg = HcConfig {
            max_parents: 1,
            restarts: 4,
            ..HcConfig::default()
        };
        let out = hill_climb(&scorer, &cfg).unwrap();
        assert!((0..3).all(|v| out.dag.parents(v).len() <= 1));
    }

    #[test]
    fn seeded_restarts_are_reproducible() {
        let data = chain_data(200, 5);
        let scorer = GaussianScorer::new(&data);
        let cfg = HcConfig {
            restarts: 5,
            seed: 77,
            ..HcConfig::default()
        };
        let a = hill_climb(&scorer, &cfg).unwrap();
        let b = hill_climb(&scorer, &cfg).unwrap();
        assert_eq!(a.dag, b.dag);
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn rejects_zero_restarts() {
        let data = chain_data(50, 1);
        let cfg = HcConfig {
            restarts: 0,
            ..HcConfig::default()
        };
        assert!(hill_climb(&GaussianScorer::new(&data), &cfg).is_err());
    }
}
