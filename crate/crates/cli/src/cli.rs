//! Command-line arguments. Every flag overrides the matching config-file
//! key, which overrides the built-in default.

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use relqual_core::regression::R2Baseline;
use relqual_core::simstudy::MethodSpec;
use relqual_core::stats::LogPolicy;

use crate::settings::{FetchSettings, LearnSettings, QualitySettings, RfSettings, SimStudySettings};

#[derive(Debug, Parser)]
#[command(name = "relqual", version, about = "Release-quality analysis: structure learning, forests and usage-normalized quality")]
pub struct Cli {
    /// Output directory; created if missing. Files inside have fixed names.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for all randomness; overrides `seed` in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file: top-level `seed` and `jobs`, one table per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel work (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structure-recovery simulation study over methods and thresholds.
    Simstudy(SimStudyArgs),
    /// Learn an averaged network from a data CSV.
    Learn(LearnArgs),
    /// Release aggregates, quality metric, timelines and trends.
    Quality(QualityArgs),
    /// Regression-forest tuning, importance and ablation.
    Rf(RfArgs),
    /// Download counts and issue timelines into a replayable cache.
    Fetch(FetchArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

fn parse_method(s: &str) -> Result<MethodSpec, String> {
    s.parse()
}

fn parse_log_policy(s: &str) -> Result<LogPolicy, String> {
    match s {
        "log1p" => Ok(LogPolicy::Log1p),
        "strict-log" => Ok(LogPolicy::StrictLog),
        _ => Err(format!("unknown log policy {s:?} (use log1p or strict-log)")),
    }
}

fn parse_baseline(s: &str) -> Result<R2Baseline, String> {
    match s {
        "fold-mean" => Ok(R2Baseline::FoldMean),
        "training-mean" => Ok(R2Baseline::TrainingMean),
        _ => Err(format!("unknown baseline {s:?} (use fold-mean or training-mean)")),
    }
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimStudyArgs {
    /// Ground-truth network JSON (default: built-in six-node network).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Simulated datasets.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Rows per simulated dataset.
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Bootstrap resamples per method and replicate.
    #[arg(long)]
    pub boot_samples: Option<usize>,
    /// Hill-climbing climbs per search.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Random operations before each restarted climb.
    #[arg(long)]
    pub perturb: Option<usize>,
    /// Parent limit per node.
    #[arg(long)]
    pub max_parents: Option<usize>,
    /// Significance level of the hybrid restrict step.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Levels per variable in discretized arms.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Starting levels for Hartemink merging.
    #[arg(long)]
    pub hartemink_initial_bins: Option<usize>,
    /// Method `<hc|map|hybrid-gs|hybrid-mmpc>[-D-<I|F|K|H>]`; repeat to list
    /// several (replaces the default list).
    #[arg(long = "method", value_parser = parse_method)]
    pub methods: Vec<MethodSpec>,
    /// Averaging threshold in [0, 1]; repeat to list several.
    #[arg(long = "threshold")]
    pub thresholds: Vec<f64>,
}

impl SimStudyArgs {
    pub fn apply(&self, s: &mut SimStudySettings) {
        set!(s.truth, self.truth.clone().map(Some));
        set!(s.replicates, self.replicates);
        set!(s.sample_size, self.sample_size);
        set!(s.boot_samples, self.boot_samples);
        set!(s.restarts, self.restarts);
        set!(s.perturb, self.perturb);
        set!(s.max_parents, self.max_parents);
        set!(s.alpha, self.alpha);
        set!(s.bins, self.bins);
        set!(s.hartemink_initial_bins, self.hartemink_initial_bins);
        if !self.methods.is_empty() {
            s.methods = self.methods.clone();
        }
        if !self.thresholds.is_empty() {
            s.thresholds = self.thresholds.clone();
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct LearnArgs {
    /// Data CSV with a header row of variable names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated columns to use (default: all).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Method `<hc|map|hybrid-gs|hybrid-mmpc>[-D-<I|F|K|H>]`.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<MethodSpec>,
    /// Bootstrap resamples; 0 learns once (exact posteriors for `map`).
    #[arg(long)]
    pub boot_samples: Option<usize>,
    /// Arc strength threshold in [0, 1].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Keep arcs strictly above the threshold instead of at or above.
    #[arg(long)]
    pub strict: bool,
    /// Hill-climbing climbs per search.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Random operations before each restarted climb.
    #[arg(long)]
    pub perturb: Option<usize>,
    /// Parent limit per node.
    #[arg(long)]
    pub max_parents: Option<usize>,
    /// Significance level of the hybrid restrict step.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Levels per variable for discretized methods.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Starting levels for Hartemink merging.
    #[arg(long)]
    pub hartemink_initial_bins: Option<usize>,
}

impl LearnArgs {
    pub fn apply(&self, s: &mut LearnSettings) {
        set!(s.data, self.data.clone().map(Some));
        if !self.columns.is_empty() {
            s.columns = self.columns.clone();
        }
        set!(s.method, self.method);
        set!(s.boot_samples, self.boot_samples);
        set!(s.threshold, self.threshold);
        s.strict |= self.strict;
        set!(s.restarts, self.restarts);
        set!(s.perturb, self.perturb);
        set!(s.max_parents, self.max_parents);
        set!(s.alpha, self.alpha);
        set!(s.bins, self.bins);
        set!(s.hartemink_initial_bins, self.hartemink_initial_bins);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct QualityArgs {
    /// Daily per-release usage CSV
    /// (date,release,new_users,users,new_visits,visits,time_on_site,exceptions).
    #[arg(long)]
    pub usage: Option<PathBuf>,
    /// Daily package series CSV (date,downloads,new_issues,cumulative_issues);
    /// repeat for several packages. The file stem names the package.
    #[arg(long = "series")]
    pub series: Vec<PathBuf>,
    /// Log transform: log1p or strict-log.
    #[arg(long, value_parser = parse_log_policy)]
    pub log_policy: Option<LogPolicy>,
    /// LOESS span for timeline trends.
    #[arg(long)]
    pub span: Option<f64>,
    /// Trend changes within this fraction of the trend's range count as flat.
    #[arg(long)]
    pub trend_band: Option<f64>,
    /// Quality level above which packages are counted.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Histogram bins for per-package median quality.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Fit exceptions against new users (and issues against downloads) as a
    /// power law.
    #[arg(long)]
    pub power_law: bool,
    /// Comma-separated release columns entered as power-law controls.
    #[arg(long, value_delimiter = ',')]
    pub power_law_controls: Vec<String>,
}

impl QualityArgs {
    pub fn apply(&self, s: &mut QualitySettings) {
        set!(s.usage, self.usage.clone().map(Some));
        if !self.series.is_empty() {
            s.series = self.series.clone();
        }
        set!(s.log_policy, self.log_policy);
        set!(s.span, self.span);
        set!(s.trend_band, self.trend_band);
        set!(s.threshold, self.threshold);
        set!(s.bins, self.bins);
        s.power_law |= self.power_law;
        if !self.power_law_controls.is_empty() {
            s.power_law_controls = self.power_law_controls.clone();
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RfArgs {
    /// Data CSV with a header row of variable names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated predictor columns (default: all others).
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,
    /// Comma-separated tree counts for the grid (default 100..=1000 by 100).
    #[arg(long, value_delimiter = ',')]
    pub ntree: Vec<usize>,
    /// Comma-separated candidate counts per split (default 1..=p).
    #[arg(long, value_delimiter = ',')]
    pub mtry: Vec<usize>,
    /// Cross-validation repeats.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Folds per repeat.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Minimum rows per leaf.
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Held-out R² baseline: fold-mean or training-mean.
    #[arg(long, value_parser = parse_baseline)]
    pub baseline: Option<R2Baseline>,
    /// Permutations per predictor and tree for importance.
    #[arg(long)]
    pub importance_repeats: Option<usize>,
    /// Predictor to drop for a paired with/without R² comparison.
    #[arg(long)]
    pub ablate: Option<String>,
}

impl RfArgs {
    pub fn apply(&self, s: &mut RfSettings) {
        set!(s.data, self.data.clone().map(Some));
        set!(s.response, self.response.clone().map(Some));
        if !self.predictors.is_empty() {
            s.predictors = self.predictors.clone();
        }
        if !self.ntree.is_empty() {
            s.ntree = self.ntree.clone();
        }
        if !self.mtry.is_empty() {
            s.mtry = self.mtry.clone();
        }
        set!(s.repeats, self.repeats);
        set!(s.folds, self.folds);
        set!(s.min_leaf, self.min_leaf);
        set!(s.baseline, self.baseline);
        set!(s.importance_repeats, self.importance_repeats);
        set!(s.ablate, self.ablate.clone().map(Some));
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct FetchArgs {
    /// Package as `name` or `name=owner/repo` (repo enables issues); repeat
    /// for several.
    #[arg(long = "package")]
    pub packages: Vec<String>,
    /// First day (YYYY-MM-DD).
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last day, inclusive (YYYY-MM-DD).
    #[arg(long)]
    pub end: Option<NaiveDate>,
    /// Response cache directory.
    #[arg(long, env = "RELQUAL_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Base URL of the downloads API.
    #[arg(long, env = "RELQUAL_DOWNLOADS_BASE")]
    pub downloads_base: Option<String>,
    /// Base URL of the issues API.
    #[arg(long, env = "RELQUAL_ISSUES_BASE")]
    pub issues_base: Option<String>,
    /// Allow network requests for URLs missing from the cache. The issues
    /// token is read from RELQUAL_ISSUES_TOKEN.
    #[arg(long)]
    pub live: bool,
    /// JSON file of recorded responses (URL to {status, headers, body}) used
    /// in place of the network.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Longest date range per downloads request.
    #[arg(long)]
    pub chunk_days: Option<usize>,
    /// Count pull requests as issues.
    #[arg(long)]
    pub include_prs: bool,
    /// Packages fetched at once.
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Monthly downloads above which a package is marked popular.
    #[arg(long)]
    pub popularity_threshold: Option<f64>,
}

impl FetchArgs {
    pub fn apply(&self, s: &mut FetchSettings) {
        if !self.packages.is_empty() {
            s.packages = self.packages.clone();
        }
        set!(s.start, self.start.map(Some));
        set!(s.end, self.end.map(Some));
        set!(s.cache_dir, self.cache_dir.clone());
        set!(s.downloads_base, self.downloads_base.clone());
        set!(s.issues_base, self.issues_base.clone());
        s.live |= self.live;
        set!(s.fixtures, self.fixtures.clone().map(Some));
        set!(s.chunk_days, self.chunk_days);
        s.include_pull_requests |= self.include_prs;
        set!(s.max_in_flight, self.max_in_flight);
        set!(s.popularity_threshold, self.popularity_threshold);
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}
