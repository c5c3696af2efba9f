//! Resolved per-command settings and the TOML config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use relqual_core::quality::{DEFAULT_SPAN, DEFAULT_TREND_BAND};
use relqual_core::regression::R2Baseline;
use relqual_core::simstudy::{default_methods, default_thresholds, MethodSpec, SearchMethod};
use relqual_core::stats::LogPolicy;
use relqual_ingest::fetch::{DEFAULT_DOWNLOADS_BASE, DEFAULT_ISSUES_BASE, POPULARITY_THRESHOLD};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1;

/// Top-level `seed` plus one table per command.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub simstudy: SimStudySettings,
    #[serde(default)]
    pub learn: LearnSettings,
    #[serde(default)]
    pub quality: QualitySettings,
    #[serde(default)]
    pub rf: RfSettings,
    #[serde(default)]
    pub fetch: FetchSettings,
}

impl ConfigFile {
    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix_opt(&mut cfg.simstudy.truth);
        fix_opt(&mut cfg.learn.data);
        fix_opt(&mut cfg.quality.usage);
        cfg.quality.series.iter_mut().for_each(fix);
        fix_opt(&mut cfg.rf.data);
        fix(&mut cfg.fetch.cache_dir);
        fix_opt(&mut cfg.fetch.fixtures);
        Ok(cfg)
    }
}

fn check_unit(field: &str, v: f64) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&v) {
        bail!("invalid configuration at {field}: must be in [0, 1], got {v}");
    }
    Ok(())
}

fn check_positive(field: &str, v: usize) -> anyhow::Result<()> {
    if v == 0 {
        bail!("invalid configuration at {field}: must be at least 1");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimStudySettings {
    /// Ground-truth network JSON; the built-in network when absent.
    pub truth: Option<PathBuf>,
    pub replicates: usize,
    pub sample_size: usize,
    pub methods: Vec<MethodSpec>,
    pub thresholds: Vec<f64>,
    pub boot_samples: usize,
    pub restarts: usize,
    pub perturb: usize,
    pub max_parents: usize,
    pub alpha: f64,
    pub bins: usize,
    pub hartemink_initial_bins: usize,
    /// Set from the top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SimStudySettings {
    fn default() -> Self {
        SimStudySettings {
            truth: None,
            replicates: 100,
            sample_size: 200,
            methods: default_methods(),
            thresholds: default_thresholds(),
            boot_samples: 100,
            restarts: 10,
            perturb: 5,
            max_parents: 5,
            alpha: 0.05,
            bins: 3,
            hartemink_initial_bins: 20,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSettings {
    pub data: Option<PathBuf>,
    /// Columns to use; all when empty.
    pub columns: Vec<String>,
    pub method: MethodSpec,
    /// Bootstrap resamples; 0 learns once on the full data (exact posterior
    /// edge probabilities for `map`).
    pub boot_samples: usize,
    pub threshold: f64,
    /// Keep arcs with strength strictly above the threshold.
    pub strict: bool,
    pub restarts: usize,
    pub perturb: usize,
    pub max_parents: usize,
    pub alpha: f64,
    pub bins: usize,
    pub hartemink_initial_bins: usize,
    /// Set from the top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for LearnSettings {
    fn default() -> Self {
        LearnSettings {
            data: None,
            columns: Vec::new(),
            method: MethodSpec::new(SearchMethod::Hc, None),
            boot_samples: 100,
            threshold: 0.85,
            strict: false,
            restarts: 10,
            perturb: 5,
            max_parents: 5,
            alpha: 0.05,
            bins: 3,
            hartemink_initial_bins: 20,
            seed: DEFAULT_SEED,
        }
    }
}

impl LearnSettings {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.data.is_none() {
            bail!("invalid configuration at learn.data: a data CSV is required (--data)");
        }
        check_unit("learn.threshold", self.threshold)?;
        check_unit("learn.alpha", self.alpha)?;
        check_positive("learn.restarts", self.restarts)?;
        check_positive("learn.max_parents", self.max_parents)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualitySettings {
    /// Daily per-release usage CSV.
    pub usage: Option<PathBuf>,
    /// Daily package series CSVs, one per package; the file stem names the
    /// package.
    pub series: Vec<PathBuf>,
    pub log_policy: LogPolicy,
    pub span: f64,
    pub trend_band: f64,
    /// Quality level above which packages are counted.
    pub threshold: f64,
    pub bins: usize,
    pub power_law: bool,
    /// Release columns entered unlogged as controls in the power-law fit.
    pub power_law_controls: Vec<String>,
    /// Set from the top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for QualitySettings {
    fn default() -> Self {
        QualitySettings {
            usage: None,
            series: Vec::new(),
            log_policy: LogPolicy::default(),
            span: DEFAULT_SPAN,
            trend_band: DEFAULT_TREND_BAND,
            threshold: 1.0,
            bins: 20,
            power_law: false,
            power_law_controls: Vec::new(),
            seed: DEFAULT_SEED,
        }
    }
}

impl QualitySettings {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.usage.is_none() && self.series.is_empty() {
            bail!("invalid configuration at quality: give --usage and/or --series");
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            bail!("invalid configuration at quality.span: must be positive, got {}", self.span);
        }
        if !(self.trend_band >= 0.0) {
            bail!("invalid configuration at quality.trend_band: must be non-negative");
        }
        check_positive("quality.bins", self.bins)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfSettings {
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    /// Predictor columns; every other column when empty.
    pub predictors: Vec<String>,
    /// Grid values; 100..=1000 by 100 when empty.
    pub ntree: Vec<usize>,
    /// Grid values; 1..=p when empty.
    pub mtry: Vec<usize>,
    pub repeats: usize,
    pub folds: usize,
    pub min_leaf: usize,
    pub baseline: R2Baseline,
    pub importance_repeats: usize,
    /// Predictor to drop for the with/without comparison.
    pub ablate: Option<String>,
    /// Set from the top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RfSettings {
    fn default() -> Self {
        RfSettings {
            data: None,
            response: None,
            predictors: Vec::new(),
            ntree: Vec::new(),
            mtry: Vec::new(),
            repeats: 10,
            folds: 2,
            min_leaf: 5,
            baseline: R2Baseline::default(),
            importance_repeats: 1,
            ablate: None,
            seed: DEFAULT_SEED,
        }
    }
}

impl RfSettings {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.data.is_none() {
            bail!("invalid configuration at rf.data: a data CSV is required (--data)");
        }
        if self.response.is_none() {
            bail!("invalid configuration at rf.response: a response column is required (--response)");
        }
        for (k, &t) in self.ntree.iter().enumerate() {
            check_positive(&format!("rf.ntree[{k}]"), t)?;
        }
        for (k, &m) in self.mtry.iter().enumerate() {
            check_positive(&format!("rf.mtry[{k}]"), m)?;
        }
        check_positive("rf.importance_repeats", self.importance_repeats)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSettings {
    /// `name` or `name=owner/repo`.
    pub packages: Vec<String>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub cache_dir: PathBuf,
    pub downloads_base: String,
    pub issues_base: String,
    pub chunk_days: usize,
    pub include_pull_requests: bool,
    pub max_in_flight: usize,
    pub live: bool,
    /// Recorded responses used in place of the network.
    pub fixtures: Option<PathBuf>,
    pub popularity_threshold: f64,
    /// Set from the top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for FetchSettings {
    fn default() -> Self {
        FetchSettings {
            packages: Vec::new(),
            start: None,
            end: None,
            cache_dir: PathBuf::from(".relqual-cache"),
            downloads_base: DEFAULT_DOWNLOADS_BASE.to_string(),
            issues_base: DEFAULT_ISSUES_BASE.to_string(),
            chunk_days: 365,
            include_pull_requests: false,
            max_in_flight: 4,
            live: false,
            fixtures: None,
            popularity_threshold: POPULARITY_THRESHOLD,
            seed: DEFAULT_SEED,
        }
    }
}

impl FetchSettings {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.packages.is_empty() {
            bail!("invalid configuration at fetch.packages: give at least one --package");
        }
        if self.start.is_none() {
            bail!("invalid configuration at fetch.start: a start date is required (--start)");
        }
        if self.end.is_none() {
            bail!("invalid configuration at fetch.end: an end date is required (--end)");
        }
        Ok(())
    }
}
