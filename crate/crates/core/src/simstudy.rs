//! Simulation study: how often bootstrap-averaged learners recover a known
//! network.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{discretize, DiscretizationMethod, DiscretizationSpec};
use crate::error::{Error, Result};
use crate::gaussian::{simulate, GaussianBn, NodeParams};
use crate::graph::{Dag, VariableSet};
use crate::metrics::{classify, Recovery};
use crate::rng::derive_path;
use crate::search::{averaged_network, bootstrap_average, HcConfig, Learner, Observations, Restrict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SearchMethod {
    Hc,
    Map,
    HybridGs,
    HybridMmpc,
}

impl SearchMethod {
    pub fn name(self) -> &'static str {
        match self {
            SearchMethod::Hc => "hc",
            SearchMethod::Map => "map",
            SearchMethod::HybridGs => "hybrid-gs",
            SearchMethod::HybridMmpc => "hybrid-mmpc",
        }
    }
}

/// A search method with optional discretization, written
/// `<method>[-D-<I|F|K|H>]`, e.g. `hc`, `hybrid-mmpc-D-H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodSpec {
    pub search: SearchMethod,
    pub discretization: Option<DiscretizationMethod>,
}

impl MethodSpec {
    pub fn new(search: SearchMethod, discretization: Option<DiscretizationMethod>) -> Self {
        MethodSpec { search, discretization }
    }

    pub fn discretization_label(&self) -> String {
        self.discretization
            .map(|d| d.code().to_string())
            .unwrap_or_else(|| "none".into())
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.search.name())?;
        if let Some(d) = self.discretization {
            write!(f, "-D-{}", d.code())?;
        }
        Ok(())
    }
}

impl FromStr for MethodSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (base, disc) = match s.rsplit_once("-D-") {
            Some((b, code)) => {
                let mut chars = code.chars();
                let d = match (chars.next(), chars.next()) {
                    (Some(c), None) => DiscretizationMethod::from_code(c),
                    _ => None,
                }
                .ok_or_else(|| format!("unknown discretization code {code:?} in {s:?} (use I, F, K or H)"))?;
                (b, Some(d))
            }
            None => (s, None),
        };
        let search = match base {
            "hc" => SearchMethod::Hc,
            "map" => SearchMethod::Map,
            "hybrid-gs" => SearchMethod::HybridGs,
            "hybrid-mmpc" => SearchMethod::HybridMmpc,
            _ => {
                return Err(format!(
                    "unknown method {base:?} (use hc, map, hybrid-gs or hybrid-mmpc)"
                ))
            }
        };
        Ok(MethodSpec::new(search, disc))
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.to_string()
    }
}

/// Methods compared in the full study: the four searches on continuous
/// data, then each with equal-frequency and Hartemink discretization.
pub fn default_methods() -> Vec<MethodSpec> {
    let searches = [SearchMethod::Hc, SearchMethod::Map, SearchMethod::HybridGs, SearchMethod::HybridMmpc];
    let mut out: Vec<MethodSpec> = searches.iter().map(|&s| MethodSpec::new(s, None)).collect();
    for d in [DiscretizationMethod::EqualFrequency, DiscretizationMethod::Hartemink] {
        out.extend(searches.iter().map(|&s| MethodSpec::new(s, Some(d))));
    }
    out
}

/// Thresholds 0.50, 0.55, ..., 1.00.
pub fn default_thresholds() -> Vec<f64> {
    (10..=20).map(|k| k as f64 * 5.0 / 100.0).collect()
}

#[derive(Debug, Clone)]
pub struct SimStudyConfig {
    pub truth: GaussianBn,
    pub replicates: usize,
    pub sample_size: usize,
    pub methods: Vec<MethodSpec>,
    pub thresholds: Vec<f64>,
    pub boot_samples: usize,
    pub hc: HcConfig,
    /// Significance level for the hybrid restrict step.
    pub alpha: f64,
    /// Bin settings shared by all discretized arms.
    pub bins: usize,
    pub hartemink_initial_bins: usize,
    pub seed: u64,
}

impl Default for SimStudyConfig {
    fn default() -> Self {
        SimStudyConfig {
            truth: default_truth(),
            replicates: 100,
            sample_size: 200,
            methods: default_methods(),
            thresholds: default_thresholds(),
            boot_samples: 100,
            hc: HcConfig {
                restarts: 10,
                ..HcConfig::default()
            },
            alpha: 0.05,
            bins: 3,
            hartemink_initial_bins: 20,
            seed: 1,
        }
    }
}

impl SimStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.sample_size < 4 {
            return Err(Error::config("sample_size", "must be at least 4"));
        }
        if self.boot_samples == 0 {
            return Err(Error::config("boot_samples", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must list at least one method"));
        }
        if self.thresholds.is_empty() {
            return Err(Error::config("thresholds", "must list at least one threshold"));
        }
        for (i, t) in self.thresholds.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::config(format!("thresholds[{i}]"), format!("{t} is outside [0, 1]")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        self.hc.validate().map_err(|e| nest("hc", e))?;
        self.discretization(DiscretizationMethod::EqualFrequency).validate()?;
        Ok(())
    }

    fn discretization(&self, method: DiscretizationMethod) -> DiscretizationSpec {
        DiscretizationSpec {
            method,
            bins: self.bins,
            hartemink_initial_bins: self.hartemink_initial_bins,
        }
    }

    fn learner(&self, search: SearchMethod) -> Learner {
        learner_for(search, self.hc, self.alpha)
    }
}

/// Learner used for a search method: exact MAP keeps `max_parents` within
/// the exact-search limit; hybrids restrict at level `alpha` and then climb.
pub fn learner_for(search: SearchMethod, hc: HcConfig, alpha: f64) -> Learner {
    match search {
        SearchMethod::Hc => Learner::HillClimb(hc),
        SearchMethod::Map => Learner::ExactMap {
            max_parents: hc.max_parents.min(crate::search::MAX_EXACT_PARENTS),
        },
        SearchMethod::HybridGs => Learner::Hybrid {
            restrict: Restrict::Gs,
            alpha,
            hc,
        },
        SearchMethod::HybridMmpc => Learner::Hybrid {
            restrict: Restrict::Mmpc,
            alpha,
            hc,
        },
    }
}

fn nest(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, message } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            message,
        },
        e => e,
    }
}

/// The six-node ground truth over the usage variables.
pub fn default_truth() -> GaussianBn {
    let vars = Arc::new(
        VariableSet::new([
            "Release.Date",
            "Release.Duration",
            "Exceptions",
            "Usage.Intensity",
            "New.Users",
            "Usage.Frequency",
        ])
        .expect("distinct names"),
    );
    let dag = Dag::from_named_edges(
        vars,
        &[
            ("Release.Date", "Release.Duration"),
            ("Release.Date", "Exceptions"),
            ("New.Users", "Exceptions"),
            ("New.Users", "Release.Duration"),
            ("Release.Duration", "Usage.Intensity"),
            ("Usage.Intensity", "Usage.Frequency"),
        ],
    )
    .expect("acyclic");
    let node = |coefficients: Vec<f64>| NodeParams {
        intercept: 0.0,
        coefficients,
        residual_sd: 1.0,
    };
    // coefficients follow increasing parent index
    let params = vec![
        node(vec![]),
        node(vec![1.3, -1.1]),
        node(vec![1.5, 0.7]),
        node(vec![0.9]),
        node(vec![]),
        node(vec![1.2]),
    ];
    GaussianBn::new(dag, params).expect("valid parameters")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub discretization: String,
    pub threshold: f64,
    pub exact: f64,
    pub off_by_one: f64,
    pub worse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodFailure {
    pub replicate: usize,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStudyReport {
    pub rows: Vec<ReportRow>,
    pub replicates: usize,
    pub sample_size: usize,
    pub boot_samples: usize,
    pub failures: Vec<MethodFailure>,
}

impl SimStudyReport {
    pub fn row(&self, method: &str, threshold: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.threshold - threshold).abs() < 1e-9)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "discretization", "threshold", "exact", "off_by_one", "worse"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.discretization.clone(),
                format!("{:.2}", r.threshold),
                format!("{:.4}", r.exact),
                format!("{:.4}", r.off_by_one),
                format!("{:.4}", r.worse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text table, one line per method and threshold.
    pub fn to_table(&self) -> String {
        let header = ["Method", "Threshold", "Exact", "Off-by-one", "Worse"];
        let body: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    format!("{:.2}", r.threshold),
                    format!("{:.3}", r.exact),
                    format!("{:.3}", r.off_by_one),
                    format!("{:.3}", r.worse),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for row in &body {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: [&str; 5]| {
            let mut s = format!("{:<w$}", cells[0], w = width[0]);
            for (c, w) in cells.iter().zip(width).skip(1) {
                s.push_str(&format!("  {c:>w$}"));
            }
            s.push('\n');
            s
        };
        let mut out = line(header);
        out.push_str(&line(width.map(|w| "-".repeat(w)).each_ref().map(|s| s.as_str())));
        for row in &body {
            out.push_str(&line(row.each_ref().map(|s| s.as_str())));
        }
        out
    }
}

/// Outcome counts for one replicate: `[method][threshold]`.
type ReplicateOutcome = (Vec<Vec<Recovery>>, Vec<MethodFailure>);

fn run_replicate(cfg: &SimStudyConfig, r: usize) -> ReplicateOutcome {
    let truth = cfg.truth.dag();
    let data = simulate(&cfg.truth, cfg.sample_size, derive_path(cfg.seed, &[r as u64, 0]));
    // the same resample seed for every method keeps comparisons paired
    let boot_seed = derive_path(cfg.seed, &[r as u64, 1]);
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    let mut failures = Vec::new();
    for m in &cfg.methods {
        let obs = match m.discretization {
            None => Ok(Observations::Continuous(data.clone())),
            Some(d) => discretize(&data, &cfg.discretization(d)).map(Observations::Discrete),
        };
        let conf = obs.and_then(|o| bootstrap_average(&o, &cfg.learner(m.search), cfg.boot_samples, boot_seed));
        let row = match conf {
            Ok(conf) => cfg
                .thresholds
                .iter()
                .map(|&t| classify(truth, &averaged_network(&conf, t).dag).expect("same variables"))
                .collect(),
            Err(e) => {
                log::warn!("replicate {r}, method {m}: {e}");
                failures.push(MethodFailure {
                    replicate: r,
                    method: m.to_string(),
                    reason: e.to_string(),
                });
                vec![Recovery::Worse; cfg.thresholds.len()]
            }
        };
        outcomes.push(row);
    }
    (outcomes, failures)
}

/// Simulate each replicate from the truth, learn with every method by
/// bootstrap averaging, and classify the averaged network at every
/// threshold. A method that fails on a replicate counts as `worse` and is
/// listed in `failures`.
pub fn run_simstudy(cfg: &SimStudyConfig) -> Result<SimStudyReport> {
    cfg.validate()?;
    let per_rep: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect();

    let reps = cfg.replicates as f64;
    let mut rows = Vec::with_capacity(cfg.methods.len() * cfg.thresholds.len());
    for (k, m) in cfg.methods.iter().enumerate() {
        for (t, &threshold) in cfg.thresholds.iter().enumerate() {
            let count = |want: Recovery| per_rep.iter().filter(|(o, _)| o[k][t] == want).count() as f64;
            let exact = count(Recovery::Exact);
            let off = count(Recovery::OffByOne);
            rows.push(ReportRow {
                method: m.to_string(),
                discretization: m.discretization_label(),
                threshold,
                exact: exact / reps,
                off_by_one: off / reps,
                worse: (reps - exact - off) / reps,
            });
        }
    }
    let failures = per_rep.into_iter().flat_map(|(_, f)| f).collect();
    Ok(SimStudyReport {
        rows,
        replicates: cfg.replicates,
        sample_size: cfg.sample_size,
        boot_samples: cfg.boot_samples,
        failures,
    })
}
