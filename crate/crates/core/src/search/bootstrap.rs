use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exact_map_dag, hill_climb, hybrid_search, HcConfig, Observations, Restrict};
use crate::error::{Error, Result};
use crate::graph::{bit, reaches, Dag, DagJson, VariableSet};
use crate::rng::{derive_path, rng_at};
use crate::scalar::Real;

/// Slack for comparing strengths and directions against cut-offs.
const TOL: f64 = 1e-12;

/// Edge confidence from a collection of networks or an exact posterior.
/// Stored as the probability of each directed edge; strength and direction
/// are derived so their invariants hold by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcConfidence {
    vars: Arc<VariableSet>,
    prob: Vec<Vec<f64>>,
}

impl ArcConfidence {
    /// Fraction of `dags` containing each directed edge.
    pub fn from_dags(vars: Arc<VariableSet>, dags: &[Dag]) -> Result<Self> {
        if dags.is_empty() {
            return Err(Error::InsufficientData("no networks to average".into()));
        }
        let p = vars.len();
        let mut counts = vec![vec![0usize; p]; p];
        for d in dags {
            if d.variables().names() != vars.names() {
                return Err(Error::VariableMismatch);
            }
            for (a, b) in d.edges() {
                counts[a][b] += 1;
            }
        }
        let m = dags.len() as f64;
        let prob = counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / m).collect())
            .collect();
        Ok(ArcConfidence { vars, prob })
    }

    /// From `prob[a][b] = P(a -> b)`.
    pub fn from_edge_probabilities(vars: Arc<VariableSet>, prob: Vec<Vec<f64>>) -> Result<Self> {
        let p = vars.len();
        if prob.len() != p || prob.iter().any(|r| r.len() != p) {
            return Err(Error::VariableMismatch);
        }
        for a in 0..p {
            for b in 0..p {
                let v = prob[a][b];
                let bad = !(0.0..=1.0).contains(&v)
                    || (a == b && v != 0.0)
                    || (a < b && prob[a][b] + prob[b][a] > 1.0 + 1e-9);
                if bad {
                    return Err(Error::config(
                        format!("prob[{a}][{b}]"),
                        "edge probabilities must be in [0,1] with P(a->b) + P(b->a) <= 1",
                    ));
                }
            }
        }
        Ok(ArcConfidence { vars, prob })
    }

    pub fn variables(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn edge_probability(&self, from: usize, to: usize) -> f64 {
        self.prob[from][to]
    }

    pub fn strength(&self, a: usize, b: usize) -> f64 {
        (self.prob[a][b] + self.prob[b][a]).min(1.0)
    }

    /// Share of the strength oriented `from -> to`; 0 when the pair never
    /// appears.
    pub fn direction(&self, from: usize, to: usize) -> f64 {
        let s = self.prob[from][to] + self.prob[to][from];
        if s > 0.0 {
            self.prob[from][to] / s
        } else {
            0.0
        }
    }

    /// Every ordered pair, sorted by (from, to) name.
    pub fn rows(&self) -> Vec<(String, String, f64, f64)> {
        let p = self.vars.len();
        let mut out = Vec::with_capacity(p * p.saturating_sub(1));
        for a in 0..p {
            for b in 0..p {
                if a != b {
                    out.push((
                        self.vars.name(a).to_string(),
                        self.vars.name(b).to_string(),
                        self.strength(a, b),
                        self.direction(a, b),
                    ));
                }
            }
        }
        out.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
        out
    }

    /// CSV with columns `from,to,strength,direction`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["from", "to", "strength", "direction"])?;
        for (from, to, s, d) in self.rows() {
            w.write_record([from, to, format!("{s:.6}"), format!("{d:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How strength is compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    AtLeast,
    Above,
}

#[derive(Debug, Clone)]
pub struct AveragedNetwork {
    pub dag: Dag,
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub source: ArcConfidence,
}

#[derive(Serialize)]
struct AveragedJson<'a> {
    threshold: f64,
    rule: ThresholdRule,
    #[serde(flatten)]
    graph: &'a DagJson,
}

impl AveragedNetwork {
    /// Graph JSON plus the threshold metadata.
    pub fn to_json(&self) -> String {
        let graph = DagJson::from(&self.dag);
        serde_json::to_string_pretty(&AveragedJson {
            threshold: self.threshold,
            rule: self.rule,
            graph: &graph,
        })
        .expect("serializable")
    }
}

/// Keep pairs with strength at least `threshold`, orient by majority
/// direction, and repair cycles.
pub fn averaged_network(conf: &ArcConfidence, threshold: f64) -> AveragedNetwork {
    averaged_network_with(conf, threshold, ThresholdRule::AtLeast)
}

/// As [`averaged_network`] with a choice of comparison. Pairs that never
/// appear are dropped even at threshold 0. A direction of exactly one half
/// orients from the lower-indexed node. A cyclic result is repaired by
/// flipping, among edges on a cycle, the one whose direction is closest to
/// one half (each edge flips at most once; if that is not enough, the
/// weakest cycle edge is dropped).
pub fn averaged_network_with(conf: &ArcConfidence, threshold: f64, rule: ThresholdRule) -> AveragedNetwork {
    let p = conf.vars.len();
    let mut parents = vec![0u64; p];
    for a in 0..p {
        for b in (a + 1)..p {
            let s = conf.strength(a, b);
            let keep = s > 0.0
                && match rule {
                    ThresholdRule::AtLeast => s >= threshold - TOL,
                    ThresholdRule::Above => s > threshold + TOL,
                };
            if !keep {
                continue;
            }
            if conf.direction(a, b) >= 0.5 - TOL {
                parents[b] |= bit(a);
            } else {
                parents[a] |= bit(b);
            }
        }
    }

    let mut flipped = vec![0u64; p];
    loop {
        let mut on_cycle: Vec<(usize, usize)> = Vec::new();
        for v in 0..p {
            for u in crate::graph::mask_iter(parents[v]) {
                if reaches(&parents, v, u) {
                    on_cycle.push((u, v));
                }
            }
        }
        if on_cycle.is_empty() {
            break;
        }
        let flippable = on_cycle
            .iter()
            .filter(|&&(u, v)| flipped[u] & bit(v) == 0 && flipped[v] & bit(u) == 0)
            .min_by(|&&(u1, v1), &&(u2, v2)| {
                let d1 = (conf.direction(u1, v1) - 0.5).abs();
                let d2 = (conf.direction(u2, v2) - 0.5).abs();
                d1.total_cmp(&d2).then((u1, v1).cmp(&(u2, v2)))
            })
            .copied();
        match flippable {
            Some((u, v)) => {
                parents[v] &= !bit(u);
                parents[u] |= bit(v);
                flipped[u] |= bit(v);
            }
            None => {
                let (u, v) = on_cycle
                    .iter()
                    .min_by(|&&(u1, v1), &&(u2, v2)| {
                        conf.strength(u1, v1)
                            .total_cmp(&conf.strength(u2, v2))
                            .then((u1, v1).cmp(&(u2, v2)))
                    })
                    .copied()
                    .expect("nonempty");
                parents[v] &= !bit(u);
            }
        }
    }
    let dag = Dag::from_parent_masks(conf.vars.clone(), parents).expect("repaired graph is acyclic");
    AveragedNetwork {
        dag,
        threshold,
        rule,
        source: conf.clone(),
    }
}

/// Structure learner applied to each bootstrap resample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    HillClimb(HcConfig),
    Hybrid {
        restrict: Restrict,
        alpha: f64,
        hc: HcConfig,
    },
    /// Posterior mode on the resample, found exactly.
    ExactMap { max_parents: usize },
}

impl Learner {
    /// Learn one network; `seed` replaces any seed in the configuration.
    pub fn learn<T: Real>(&self, data: &Observations<T>, seed: u64) -> Result<Dag> {
        match *self {
            Learner::HillClimb(cfg) => {
                let cfg = HcConfig { seed, ..cfg };
                data.with_scorer(|s| hill_climb(s, &cfg)).map(|o| o.dag)
            }
            Learner::Hybrid { restrict, alpha, hc } => {
                let cfg = HcConfig { seed, ..hc };
                data.with_scorer(|s| data.with_ci_test(|t| hybrid_search(s, t, restrict, alpha, &cfg)))
                    .map(|o| o.dag)
            }
            Learner::ExactMap { max_parents } => data.with_scorer(|s| exact_map_dag(s, max_parents)).map(|(d, _)| d),
        }
    }
}

/// Learn one network per resample (rows drawn with replacement, same size)
/// and tabulate edge confidence. Resample `b` draws its rows and its learner
/// seed from streams derived from `(seed, b)`, so the result does not depend
/// on thread count.
pub fn bootstrap_average<T: Real>(
    data: &Observations<T>,
    learner: &Learner,
    boot_samples: usize,
    seed: u64,
) -> Result<ArcConfidence> {
    if boot_samples == 0 {
        return Err(Error::config("boot_samples", "must be at least 1"));
    }
    let n = data.n_rows();
    let dags: Vec<Dag> = (0..boot_samples)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_at(seed, &[b as u64, 0]);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            learner.learn(&data.take_rows(&rows), derive_path(seed, &[b as u64, 1]))
        })
        .collect::<Result<_>>()?;
    ArcConfidence::from_dags(data.variables().clone(), &dags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(n: usize) -> Arc<VariableSet> {
        Arc::new(VariableSet::new(["A", "B", "C", "D"].into_iter().take(n)).unwrap())
    }

    fn conf(p: usize, entries: &[(usize, usize, f64)]) -> ArcConfidence {
        let mut prob = vec![vec![0.0; p]; p];
        for &(a, b, v) in entries {
            prob[a][b] = v;
        }
        ArcConfidence::from_edge_probabilities(vars(p), prob).unwrap()
    }

    #[test]
    fn strength_and_direction_semantics() {
        // strength 1.00 with 0.66 one way
        let c = conf(2, &[(1, 0, 0.66), (0, 1, 0.34)]);
        assert!((c.strength(0, 1) - 1.0).abs() < 1e-12);
        assert!((c.direction(1, 0) - 0.66).abs() < 1e-12);
        assert!((c.direction(0, 1) - 0.34).abs() < 1e-12);
        let net = averaged_network(&c, 0.85);
        assert_eq!(net.dag.edges(), vec![(1, 0)]);
    }

    #[test]
    fn threshold_keeps_only_strong_pairs() {
        let c = conf(3, &[(0, 1, 0.86), (0, 2, 0.46)]);
        assert_eq!(averaged_network(&c, 0.85).dag.edges(), vec![(0, 1)]);
        assert_eq!(averaged_network(&c, 0.0).dag.n_edges(), 2);
        let strict = averaged_network_with(&conf(2, &[(0, 1, 0.85)]), 0.85, ThresholdRule::Above);
        assert_eq!(strict.dag.n_edges(), 0);
        assert_eq!(averaged_network(&conf(2, &[(0, 1, 0.85)]), 0.85).dag.n_edges(), 1);
    }

    #[test]
    fn cycle_is_repaired_at_weakest_direction() {
        // A->B 0.9, B->C 0.8, C->A 0.6: flip C->A
        let c = conf(3, &[(0, 1, 0.9), (1, 0, 0.1), (1, 2, 0.8), (2, 1, 0.2), (2, 0, 0.6), (0, 2, 0.4)]);
        let net = averaged_network(&c, 0.5);
        assert_eq!(net.dag.edges(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn fixed_learner_gives_unit_confidence() {
        let dag = Dag::from_edges(vars(3), &[(0, 1), (1, 2)]).unwrap();
        let c = ArcConfidence::from_dags(vars(3), &[dag.clone(), dag.clone(), dag]).unwrap();
        assert_eq!(c.strength(0, 1), 1.0);
        assert_eq!(c.direction(0, 1), 1.0);
        assert_eq!(c.direction(1, 0), 0.0);
        assert_eq!(c.strength(0, 2), 0.0);
    }

    #[test]
    fn csv_layout() {
        let c = conf(2, &[(0, 1, 0.25)]);
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s, "from,to,strength,direction\nA,B,0.250000,1.000000\nB,A,0.250000,0.000000\n");
    }
}
