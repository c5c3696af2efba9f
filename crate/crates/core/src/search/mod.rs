//! Score-based and hybrid structure learning with bootstrap model averaging.

mod bootstrap;
mod ci;
mod exact;
mod hill_climb;
mod restrict;

use std::collections::HashMap;
use std::sync::Arc;

pub use bootstrap::{
    averaged_network, averaged_network_with, bootstrap_average, ArcConfidence, AveragedNetwork,
    Learner, ThresholdRule,
};
pub use ci::{CiTest, FisherZ, GTest};
pub use exact::{exact_map_dag, exact_map_edge_probabilities, MAX_EXACT_NODES, MAX_EXACT_PARENTS};
pub use hill_climb::{hill_climb, hill_climb_restricted, HcConfig, HcOutcome};
pub use restrict::{hybrid_search, restrict_gs, restrict_mmpc, PairSet, Restrict};

use crate::data::Dataset;
use crate::discrete::{family_score_discrete, DiscreteDataset};
use crate::error::Result;
use crate::gaussian::family_score;
use crate::graph::{mask_iter, VariableSet};
use crate::scalar::Real;

/// Decomposable network score: one term per (node, parent set).
pub trait FamilyScorer: Sync {
    fn variables(&self) -> &Arc<VariableSet>;

    fn family_score(&self, node: usize, parents: &[usize]) -> Result<f64>;

    fn n_vars(&self) -> usize {
        self.variables().len()
    }
}

/// BIC-g over continuous data.
pub struct GaussianScorer<'a, T: Real = f64> {
    data: &'a Dataset<T>,
}

impl<'a, T: Real> GaussianScorer<'a, T> {
    pub fn new(data: &'a Dataset<T>) -> Self {
        GaussianScorer { data }
    }
}

impl<T: Real> FamilyScorer for GaussianScorer<'_, T> {
    fn variables(&self) -> &Arc<VariableSet> {
        self.data.variables()
    }

    fn family_score(&self, node: usize, parents: &[usize]) -> Result<f64> {
        family_score(self.data, node, parents)
    }
}

/// Multinomial BIC over level-coded data.
pub struct DiscreteScorer<'a> {
    data: &'a DiscreteDataset,
}

impl<'a> DiscreteScorer<'a> {
    pub fn new(data: &'a DiscreteDataset) -> Self {
        DiscreteScorer { data }
    }
}

impl FamilyScorer for DiscreteScorer<'_> {
    fn variables(&self) -> &Arc<VariableSet> {
        self.data.variables()
    }

    fn family_score(&self, node: usize, parents: &[usize]) -> Result<f64> {
        Ok(family_score_discrete(self.data, node, parents))
    }
}

/// Memoized family scores keyed by (node, parent mask).
pub struct ScoreCache<'s> {
    scorer: &'s dyn FamilyScorer,
    memo: HashMap<(usize, u64), f64>,
}

impl<'s> ScoreCache<'s> {
    pub fn new(scorer: &'s dyn FamilyScorer) -> Self {
        ScoreCache {
            scorer,
            memo: HashMap::new(),
        }
    }

    pub fn scorer(&self) -> &'s dyn FamilyScorer {
        self.scorer
    }

    pub fn get(&mut self, node: usize, parents: u64) -> Result<f64> {
        if let Some(&s) = self.memo.get(&(node, parents)) {
            return Ok(s);
        }
        let list: Vec<usize> = mask_iter(parents).collect();
        let s = self.scorer.family_score(node, &list)?;
        self.memo.insert((node, parents), s);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// Total score of a graph given as parent masks, bypassing any cache.
pub fn score_masks(scorer: &dyn FamilyScorer, parents: &[u64]) -> Result<f64> {
    parents
        .iter()
        .enumerate()
        .map(|(v, &m)| scorer.family_score(v, &mask_iter(m).collect::<Vec<_>>()))
        .sum()
}

/// Data a structure learner can run on. The scorer and independence test
/// follow the kind of data.
#[derive(Debug, Clone)]
pub enum Observations<T: Real = f64> {
    Continuous(Dataset<T>),
    Discrete(DiscreteDataset),
}

impl<T: Real> Observations<T> {
    pub fn n_rows(&self) -> usize {
        match self {
            Observations::Continuous(d) => d.n_rows(),
            Observations::Discrete(d) => d.n_rows(),
        }
    }

    pub fn variables(&self) -> &Arc<VariableSet> {
        match self {
            Observations::Continuous(d) => d.variables(),
            Observations::Discrete(d) => d.variables(),
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> Self {
        match self {
            Observations::Continuous(d) => Observations::Continuous(d.take_rows(rows)),
            Observations::Discrete(d) => Observations::Discrete(d.take_rows(rows)),
        }
    }

    /// Run `f` with the scorer matching this data.
    pub fn with_scorer<R>(&self, f: impl FnOnce(&dyn FamilyScorer) -> R) -> R {
        match self {
            Observations::Continuous(d) => f(&GaussianScorer::new(d)),
            Observations::Discrete(d) => f(&DiscreteScorer::new(d)),
        }
    }

    /// Run `f` with the conditional-independence test matching this data:
    /// Fisher z for continuous, G-test for discrete.
    pub fn with_ci_test<R>(&self, f: impl FnOnce(&dyn CiTest) -> R) -> R {
        match self {
            Observations::Continuous(d) => f(&FisherZ::new(d)),
            Observations::Discrete(d) => f(&GTest::new(d)),
        }
    }
}
