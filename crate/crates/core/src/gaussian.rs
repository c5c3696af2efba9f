//! Linear-Gaussian Bayesian networks.
//!
//! Every node is a linear regression on its parents with Gaussian residuals.
//! The network score is BIC under that model, in the "higher is better"
//! convention:
//!
//! ```text
//! score = sum over nodes [ loglik(node | parents) ] - (k / 2) ln n
//! ```
//!
//! with `k = parents + 2` per node (coefficients, intercept, variance). The
//! likelihood uses the maximum-likelihood variance `SSE / n`; the classical
//! per-edge inference in [`edge_inference`] uses the unbiased `SSE / (n-p-1)`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Dag, VariableSet};
use crate::linalg::least_squares;
use crate::rng::rng_from;
use crate::scalar::Real;
use crate::stats::{ols, OlsError};

#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams<T = f64> {
    pub intercept: T,
    /// One per parent, in increasing parent-index order.
    pub coefficients: Vec<T>,
    pub residual_sd: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBn<T = f64> {
    dag: Dag,
    params: Vec<NodeParams<T>>,
}

impl<T: Real> GaussianBn<T> {
    pub fn new(dag: Dag, params: Vec<NodeParams<T>>) -> Result<Self> {
        if params.len() != dag.n_nodes() {
            return Err(Error::config(
                "params",
                format!("{} entries for {} nodes", params.len(), dag.n_nodes()),
            ));
        }
        for (v, p) in params.iter().enumerate() {
            let name = dag.variables().name(v);
            if p.coefficients.len() != dag.parent_mask(v).count_ones() as usize {
                return Err(Error::config(
                    format!("nodes[{name}].coefficients"),
                    "length must equal parent count",
                ));
            }
            if !p.residual_sd.is_finite() || p.residual_sd < T::zero() {
                return Err(Error::config(
                    format!("nodes[{name}].residual_sd"),
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(GaussianBn { dag, params })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn params(&self) -> &[NodeParams<T>] {
        &self.params
    }

    pub fn node(&self, v: usize) -> &NodeParams<T> {
        &self.params[v]
    }

    pub fn variables(&self) -> &Arc<VariableSet> {
        self.dag.variables()
    }
}

/// Least-squares fit of one node on its parents.
struct FamilyFit<T> {
    intercept: T,
    coefficients: Vec<T>,
    sse: T,
}

fn fit_family<T: Real>(data: &Dataset<T>, node: usize, parents: &[usize]) -> Result<FamilyFit<T>> {
    let n = data.n_rows();
    let name = || data.variables().name(node).to_string();
    if n <= parents.len() + 1 {
        return Err(Error::InsufficientRows {
            node: name(),
            needed: parents.len() + 1,
            got: n,
        });
    }
    let y = data.column(node);
    if parents.is_empty() {
        let m = crate::stats::mean(y);
        let sse = y.iter().map(|&v| (v - m) * (v - m)).sum();
        return Ok(FamilyFit {
            intercept: m,
            coefficients: Vec::new(),
            sse,
        });
    }
    let ones = vec![T::one(); n];
    let mut cols: Vec<&[T]> = Vec::with_capacity(parents.len() + 1);
    cols.push(&ones);
    cols.extend(parents.iter().map(|&p| data.column(p)));
    let ls = least_squares(&cols, y).ok_or_else(|| Error::RankDeficient { node: name() })?;
    Ok(FamilyFit {
        intercept: ls.coef[0],
        coefficients: ls.coef[1..].to_vec(),
        sse: ls.sse,
    })
}

/// Fit every node by least squares on its parents. `residual_sd` is the
/// maximum-likelihood estimate `sqrt(SSE / n)`.
pub fn fit<T: Real>(dag: &Dag, data: &Dataset<T>) -> Result<GaussianBn<T>> {
    check_vars(dag, data)?;
    let n = T::of_usize(data.n_rows());
    let params = (0..dag.n_nodes())
        .map(|v| {
            let f = fit_family(data, v, &dag.parents(v))?;
            Ok(NodeParams {
                intercept: f.intercept,
                coefficients: f.coefficients,
                residual_sd: (f.sse / n).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianBn::new(dag.clone(), params)
}

fn check_vars<T: Real>(dag: &Dag, data: &Dataset<T>) -> Result<()> {
    if dag.variables().names() != data.variables().names() {
        return Err(Error::VariableMismatch);
    }
    Ok(())
}

/// Gaussian log-likelihood at the MLE for a residual sum of squares.
pub fn gaussian_loglik(sse: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI * sse / n).ln() + 1.0)
}

/// BIC contribution of one node given its parent set.
pub fn family_score<T: Real>(data: &Dataset<T>, node: usize, parents: &[usize]) -> Result<f64> {
    let f = fit_family(data, node, parents)?;
    let y = data.column(node);
    let yy: T = y.iter().map(|&v| v * v).sum();
    let tiny = T::epsilon() * T::of(1e4);
    if f.sse <= tiny * tiny * yy {
        return Err(Error::DegenerateVariance {
            node: data.variables().name(node).to_string(),
        });
    }
    let n = data.n_rows();
    let k = (parents.len() + 2) as f64;
    Ok(gaussian_loglik(f.sse.to_f64_lossy(), n) - 0.5 * k * (n as f64).ln())
}

/// Network BIC; the sum of [`family_score`] over nodes.
pub fn bic_g<T: Real>(dag: &Dag, data: &Dataset<T>) -> Result<f64> {
    check_vars(dag, data)?;
    (0..dag.n_nodes())
        .map(|v| family_score(data, v, &dag.parents(v)))
        .sum()
}

/// Ancestral sampling in topological order.
pub fn simulate<T: Real>(bn: &GaussianBn<T>, n: usize, seed: u64) -> Dataset<T> {
    let mut rng = rng_from(seed);
    simulate_with(bn, n, &mut rng)
}

pub fn simulate_with<T: Real, R: Rng + ?Sized>(bn: &GaussianBn<T>, n: usize, rng: &mut R) -> Dataset<T> {
    let nv = bn.dag.n_nodes();
    let mut cols: Vec<Vec<T>> = vec![Vec::new(); nv];
    for v in bn.dag.topological_order() {
        let p = &bn.params[v];
        let parents = bn.dag.parents(v);
        let mut col = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = p.intercept;
            for (c, &u) in p.coefficients.iter().zip(&parents) {
                x = x + *c * cols[u][i];
            }
            if p.residual_sd > T::zero() {
                x = x + p.residual_sd * T::standard_normal(rng);
            }
            col.push(x);
        }
        cols[v] = col;
    }
    Dataset::new(Arc::clone(bn.variables()), cols).expect("simulated columns are complete")
}

/// Exact mean vector and covariance matrix of the joint Gaussian.
pub fn implied_moments<T: Real>(bn: &GaussianBn<T>) -> (Vec<T>, Vec<Vec<T>>) {
    let nv = bn.dag.n_nodes();
    let mut mu = vec![T::zero(); nv];
    let mut cov = vec![vec![T::zero(); nv]; nv];
    let mut done: Vec<usize> = Vec::with_capacity(nv);
    for v in bn.dag.topological_order() {
        let p = &bn.params[v];
        let parents = bn.dag.parents(v);
        mu[v] = p.intercept
            + parents
                .iter()
                .zip(&p.coefficients)
                .map(|(&u, &c)| c * mu[u])
                .sum::<T>();
        // cov(v, w) = sum_p c_p cov(p, w) for every earlier w
        for &w in &done {
            let c: T = parents
                .iter()
                .zip(&p.coefficients)
                .map(|(&u, &b)| b * cov[u][w])
                .sum();
            cov[v][w] = c;
            cov[w][v] = c;
        }
        let mut var = p.residual_sd * p.residual_sd;
        for (i, &u) in parents.iter().enumerate() {
            for (j, &w) in parents.iter().enumerate() {
                var = var + p.coefficients[i] * p.coefficients[j] * cov[u][w];
            }
        }
        cov[v][v] = var;
        done.push(v);
    }
    (mu, cov)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeStat {
    pub from: String,
    pub to: String,
    pub coefficient: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStat {
    pub node: String,
    /// Only for nodes with at least one parent.
    pub adj_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeInference {
    pub edges: Vec<EdgeStat>,
    pub nodes: Vec<NodeStat>,
}

/// Per node, OLS on all its parents; each edge gets its coefficient and the
/// two-sided t p-value on `n - p - 1` degrees of freedom.
pub fn edge_inference<T: Real>(dag: &Dag, data: &Dataset<T>) -> Result<EdgeInference> {
    check_vars(dag, data)?;
    let vars = dag.variables();
    let mut edges = Vec::new();
    let mut nodes = Vec::new();
    for v in 0..dag.n_nodes() {
        let parents = dag.parents(v);
        if parents.is_empty() {
            nodes.push(NodeStat {
                node: vars.name(v).to_string(),
                adj_r2: None,
            });
            continue;
        }
        let preds: Vec<&[T]> = parents.iter().map(|&p| data.column(p)).collect();
        let fit = ols(data.column(v), &preds).map_err(|e| match e {
            OlsError::TooFewRows { needed, got } => Error::InsufficientRows {
                node: vars.name(v).to_string(),
                needed: needed - 1,
                got,
            },
            OlsError::RankDeficient => Error::RankDeficient {
                node: vars.name(v).to_string(),
            },
        })?;
        for (j, &p) in parents.iter().enumerate() {
            edges.push(EdgeStat {
                from: vars.name(p).to_string(),
                to: vars.name(v).to_string(),
                coefficient: fit.coefficients[j + 1],
                p_value: fit.p_values[j + 1],
            });
        }
        nodes.push(NodeStat {
            node: vars.name(v).to_string(),
            adj_r2: Some(fit.adj_r2),
        });
    }
    Ok(EdgeInference { edges, nodes })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeJson {
    name: String,
    intercept: f64,
    parents: Vec<String>,
    coefficients: Vec<f64>,
    residual_sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BnJson {
    variables: Vec<String>,
    nodes: Vec<NodeJson>,
}

impl<T: Real> GaussianBn<T> {
    pub fn to_json(&self) -> String {
        let vars = self.variables();
        let nodes = (0..self.dag.n_nodes())
            .map(|v| {
                let p = &self.params[v];
                NodeJson {
                    name: vars.name(v).to_string(),
                    intercept: p.intercept.to_f64_lossy(),
                    parents: self
                        .dag
                        .parents(v)
                        .into_iter()
                        .map(|u| vars.name(u).to_string())
                        .collect(),
                    coefficients: p.coefficients.iter().map(|c| c.to_f64_lossy()).collect(),
                    residual_sd: p.residual_sd.to_f64_lossy(),
                }
            })
            .collect();
        serde_json::to_string_pretty(&BnJson {
            variables: vars.names().to_vec(),
            nodes,
        })
        .expect("plain data serializes")
    }

    /// Parse the JSON produced by [`GaussianBn::to_json`]. Parents may be
    /// listed in any order; coefficients follow their parent.
    pub fn from_json(s: &str) -> Result<Self> {
        let j: BnJson = serde_json::from_str(s)?;
        let vars = Arc::new(VariableSet::new(j.variables)?);
        let mut edges = Vec::new();
        let mut params: Vec<Option<NodeParams<T>>> = vec![None; vars.len()];
        for node in &j.nodes {
            let v = vars.require(&node.name)?;
            if node.parents.len() != node.coefficients.len() {
                return Err(Error::config(
                    format!("nodes[{}].coefficients", node.name),
                    "length must equal parent count",
                ));
            }
            let mut pc: Vec<(usize, f64)> = node
                .parents
                .iter()
                .zip(&node.coefficients)
                .map(|(p, &c)| Ok((vars.require(p)?, c)))
                .collect::<Result<_>>()?;
            pc.sort_by_key(|x| x.0);
            edges.extend(pc.iter().map(|&(p, _)| (p, v)));
            params[v] = Some(NodeParams {
                intercept: T::of(node.intercept),
                coefficients: pc.iter().map(|&(_, c)| T::of(c)).collect(),
                residual_sd: T::of(node.residual_sd),
            });
        }
        let params = params
            .into_iter()
            .enumerate()
            .map(|(v, p)| {
                p.ok_or_else(|| Error::config(format!("nodes[{}]", vars.name(v)), "missing"))
            })
            .collect::<Result<Vec<_>>>()?;
        let dag = Dag::from_edges(vars, &edges)?;
        GaussianBn::new(dag, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vars(names: &[&str]) -> Arc<VariableSet> {
        Arc::new(VariableSet::new(names.iter().copied()).unwrap())
    }

    fn chain_bn(b: f64) -> GaussianBn {
        let dag = Dag::from_named_edges(vars(&["A", "B"]), &[("A", "B")]).unwrap();
        GaussianBn::new(
            dag,
            vec![
                NodeParams {
                    intercept: 0.0,
                    coefficients: vec![],
                    residual_sd: 1.0,
                },
                NodeParams {
                    intercept: 0.5,
                    coefficients: vec![b],
                    residual_sd: 1.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn empty_dag_fit_is_mean_and_ml_sd() {
        let d = Dataset::from_named_columns(vec![("A", vec![1.0, 2.0, 3.0, 6.0])]).unwrap();
        let g = Dag::empty(d.variables().clone()).unwrap();
        let bn = fit(&g, &d).unwrap();
        assert_relative_eq!(bn.node(0).intercept, 3.0);
        // ML variance: (4 + 1 + 0 + 9) / 4
        assert_relative_eq!(bn.node(0).residual_sd, 3.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn exact_linear_relation() {
        let a = vec![0.3, 1.0, -2.0, 4.0, 0.5];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let d = Dataset::from_named_columns(vec![("A", a), ("B", b)]).unwrap();
        let g = Dag::from_named_edges(d.variables().clone(), &[("A", "B")]).unwrap();
        let bn = fit(&g, &d).unwrap();
        assert_relative_eq!(bn.node(1).coefficients[0], 2.0, epsilon = 1e-12);
        assert!(bn.node(1).residual_sd < 1e-12);
        assert!(matches!(bic_g(&g, &d), Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn fit_errors() {
        let d = Dataset::from_named_columns(vec![("A", vec![1.0, 2.0]), ("B", vec![1.0, 3.0])])
            .unwrap();
        let g = Dag::from_named_edges(d.variables().clone(), &[("A", "B")]).unwrap();
        assert!(matches!(fit(&g, &d), Err(Error::InsufficientRows { .. })));
        let d = Dataset::from_named_columns(vec![
            ("A", vec![1.0, 2.0, 3.0, 4.0]),
            ("B", vec![2.0, 4.0, 6.0, 8.0]),
            ("C", vec![0.0, 1.0, 0.0, 2.0]),
        ])
        .unwrap();
        let g = Dag::from_named_edges(d.variables().clone(), &[("A", "C"), ("B", "C")]).unwrap();
        assert!(matches!(fit(&g, &d), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn single_normal_column_closed_form() {
        let x = vec![0.2, -1.1, 0.7, 1.9, -0.4, 0.0, 0.8];
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let s2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let expected = -n / 2.0 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0) - n.ln();
        let d = Dataset::from_named_columns(vec![("X", x)]).unwrap();
        let g = Dag::empty(d.variables().clone()).unwrap();
        assert_relative_eq!(bic_g(&g, &d).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn penalty_per_parent() {
        // same SSE, one more parent: score drops by ln(n)/2
        let n = 40;
        assert_relative_eq!(
            gaussian_loglik(3.0, n) - 0.5 * 2.0 * (n as f64).ln()
                - (gaussian_loglik(3.0, n) - 0.5 * 3.0 * (n as f64).ln()),
            0.5 * (n as f64).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn simulate_constant_rows_and_determinism() {
        let g = Dag::empty(vars(&["A", "B"])).unwrap();
        let bn = GaussianBn::new(
            g,
            vec![
                NodeParams {
                    intercept: 1.0,
                    coefficients: vec![],
                    residual_sd: 0.0,
                },
                NodeParams {
                    intercept: 2.0,
                    coefficients: vec![],
                    residual_sd: 0.0,
                },
            ],
        )
        .unwrap();
        let d = simulate(&bn, 5, 1);
        for i in 0..5 {
            assert_eq!(d.row(i), vec![1.0, 2.0]);
        }
        let c = chain_bn(1.0);
        assert_eq!(simulate(&c, 50, 9), simulate(&c, 50, 9));
        assert_ne!(simulate(&c, 50, 9), simulate(&c, 50, 10));
    }

    #[test]
    fn chain_regression_slope_converges() {
        let bn = chain_bn(1.0);
        let d = simulate(&bn, 100_000, 3);
        let a = d.column(0);
        let b = d.column(1);
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let var: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        assert!((cov / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn moments_closed_forms() {
        let g = Dag::empty(vars(&["A", "B"])).unwrap();
        let bn = GaussianBn::new(
            g,
            vec![
                NodeParams {
                    intercept: 1.0,
                    coefficients: vec![],
                    residual_sd: 2.0,
                },
                NodeParams {
                    intercept: -1.0,
                    coefficients: vec![],
                    residual_sd: 0.5,
                },
            ],
        )
        .unwrap();
        let (mu, cov) = implied_moments(&bn);
        assert_eq!(mu, vec![1.0, -1.0]);
        assert_eq!(cov, vec![vec![4.0, 0.0], vec![0.0, 0.25]]);

        let (mu, cov) = implied_moments(&chain_bn(3.0));
        assert_eq!(mu, vec![0.0, 0.5]);
        assert_relative_eq!(cov[0][1], 3.0);
        assert_relative_eq!(cov[1][1], 10.0);
    }

    #[test]
    fn edge_inference_perfect_fit() {
        let d = Dataset::from_named_columns(vec![
            ("x", vec![1.0, 2.0, 3.0, 4.0]),
            ("y", vec![2.0, 4.0, 6.0, 8.0]),
        ])
        .unwrap();
        let g = Dag::from_named_edges(d.variables().clone(), &[("x", "y")]).unwrap();
        let inf = edge_inference(&g, &d).unwrap();
        assert_relative_eq!(inf.edges[0].coefficient, 2.0, epsilon = 1e-12);
        assert!(inf.edges[0].p_value < 1e-12);
        assert_eq!(inf.nodes[1].adj_r2, Some(1.0));
        assert_eq!(inf.nodes[0].adj_r2, None);
    }

    #[test]
    fn json_round_trip() {
        let bn = chain_bn(1.25);
        let s = bn.to_json();
        let back: GaussianBn = GaussianBn::from_json(&s).unwrap();
        assert_eq!(back, bn);
    }

    #[test]
    fn generic_over_f32() {
        let bn = chain_bn(2.0);
        let d: Dataset<f32> = simulate(&bn, 2000, 5).cast();
        let refit = fit(bn.dag(), &d).unwrap();
        assert!((refit.node(1).coefficients[0] - 2.0).abs() < 0.1);
        assert!(bic_g(bn.dag(), &d).unwrap().is_finite());
    }
}
