use std::sync::Arc;

use proptest::prelude::*;
use relqual_core::gaussian::simulate;
use relqual_core::metrics::diff;
use relqual_core::search::{averaged_network_with, bootstrap_average, ArcConfidence, ThresholdRule};
use relqual_core::simstudy::default_truth;
use relqual_core::{Dag, HcConfig, Learner, Observations, VariableSet};

fn vars(p: usize) -> Arc<VariableSet> {
    Arc::new(VariableSet::numbered(p))
}

/// Random directed-edge probabilities with `P(a->b) + P(b->a) <= 1`.
fn edge_probs(p: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), p * p).prop_map(move |cells| {
        let mut prob = vec![vec![0.0; p]; p];
        for a in 0..p {
            for b in a + 1..p {
                let (s, d) = cells[a * p + b];
                prob[a][b] = s * d;
                prob[b][a] = s * (1.0 - d);
            }
        }
        prob
    })
}

proptest! {
    #[test]
    fn added_edges_never_close_a_cycle(ops in proptest::collection::vec((0usize..6, 0usize..6), 0..40)) {
        let mut g = Dag::empty(vars(6)).unwrap();
        for (a, b) in ops {
            match g.add_edge_checked(a, b) {
                Ok(next) => {
                    prop_assert!(a != b && !g.reaches(b, a));
                    g = next;
                }
                Err(_) => prop_assert!(a == b || g.has_edge(a, b) || g.reaches(b, a)),
            }
            let order = g.topological_order();
            prop_assert_eq!(order.len(), 6);
            let pos: Vec<usize> = (0..6).map(|v| order.iter().position(|&u| u == v).unwrap()).collect();
            prop_assert!(g.edges().iter().all(|&(a, b)| pos[a] < pos[b]));
        }
    }

    #[test]
    fn strength_is_symmetric_and_directions_sum_to_one(prob in edge_probs(5)) {
        let c = ArcConfidence::from_edge_probabilities(vars(5), prob).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                prop_assert_eq!(c.strength(a, b), c.strength(b, a));
                if a != b && c.strength(a, b) > 0.0 {
                    prop_assert!((c.direction(a, b) + c.direction(b, a) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn averaged_network_is_acyclic_and_thresholded(prob in edge_probs(6), t in 0.0f64..=1.0, strict in any::<bool>()) {
        let c = ArcConfidence::from_edge_probabilities(vars(6), prob).unwrap();
        let rule = if strict { ThresholdRule::Above } else { ThresholdRule::AtLeast };
        let net = averaged_network_with(&c, t, rule);
        prop_assert_eq!(net.dag.topological_order().len(), 6);
        for (a, b) in net.dag.edges() {
            let s = c.strength(a, b);
            let kept = if strict { s > t } else { s >= t };
            prop_assert!(kept);
        }
    }

    #[test]
    fn shd_is_a_metric_on_small_graphs(
        e1 in proptest::collection::vec((0usize..4, 0usize..4), 0..8),
        e2 in proptest::collection::vec((0usize..4, 0usize..4), 0..8),
    ) {
        let build = |edges: &[(usize, usize)]| {
            edges.iter().fold(Dag::empty(vars(4)).unwrap(), |g, &(a, b)| g.add_edge_checked(a, b).unwrap_or(g))
        };
        let (g, h) = (build(&e1), build(&e2));
        prop_assert_eq!(diff(&g, &g).unwrap().shd(), 0);
        prop_assert_eq!(diff(&g, &h).unwrap().shd(), diff(&h, &g).unwrap().shd());
    }
}

#[test]
fn bootstrap_is_deterministic_across_thread_counts() {
    let data = simulate(&default_truth(), 150, 7);
    let obs = Observations::Continuous(data);
    let learner = Learner::HillClimb(HcConfig {
        restarts: 3,
        ..HcConfig::default()
    });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_average(&obs, &learner, 20, 11).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, bootstrap_average(&obs, &learner, 20, 11).unwrap());
}
