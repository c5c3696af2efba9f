//! Per-release aggregation of usage records, the usage-normalized quality
//! metric, and daily quality timelines with a smoothed trend.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loess::loess;
use crate::rng::rng_from;
use crate::scalar::Real;
use crate::stats::{ols, quantile_sorted, LogPolicy, OlsError};

pub const RELEASE_DATE: &str = "Release.Date";
pub const RELEASE_DURATION: &str = "Release.Duration";
pub const EXCEPTIONS: &str = "Exceptions";
pub const USAGE_INTENSITY: &str = "Usage.Intensity";
pub const NEW_USERS: &str = "New.Users";
pub const USAGE_FREQUENCY: &str = "Usage.Frequency";
pub const QUALITY: &str = "Quality";

pub const USAGE_HEADER: [&str; 8] = [
    "date",
    "release",
    "new_users",
    "users",
    "new_visits",
    "visits",
    "time_on_site",
    "exceptions",
];

/// One day of usage for one release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub date: NaiveDate,
    pub release: String,
    pub new_users: u64,
    pub users: u64,
    pub new_visits: u64,
    pub visits: u64,
    /// Seconds.
    pub time_on_site: f64,
    pub exceptions: u64,
}

fn days_since_epoch(d: NaiveDate) -> i64 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")).num_days()
}

/// Raise each day's `new_users` by the shortfall of the running total below
/// that day's `users`. Records must be in date order.
pub fn correct_new_users(records: &[UsageRecord]) -> Result<Vec<UsageRecord>> {
    if let Some(i) = records.windows(2).position(|w| w[1].date < w[0].date) {
        return Err(Error::UnsortedInput(i + 1));
    }
    let mut cum = 0u64;
    Ok(records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            cum += r.new_users;
            if cum < r.users {
                r.new_users += r.users - cum;
                cum = r.users;
            }
            r
        })
        .collect())
}

/// Model variables for one release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseAggregate {
    pub release: String,
    /// Days since 1970-01-01 of the first record.
    pub release_date: i64,
    /// Days from first to last record, inclusive.
    pub release_duration: i64,
    pub exceptions: u64,
    pub new_users: u64,
    /// Seconds on site per new user.
    pub usage_intensity: f64,
    /// New visits per new user.
    pub usage_frequency: f64,
    /// Set when there are no new users; the per-user fields are then 0.
    pub zero_users: bool,
}

/// Aggregate the corrected records of one release.
pub fn aggregate_release(records: &[UsageRecord]) -> Result<ReleaseAggregate> {
    let first = records.first().ok_or(Error::EmptyRelease)?;
    let start = records.iter().map(|r| r.date).min().expect("nonempty");
    let end = records.iter().map(|r| r.date).max().expect("nonempty");
    let new_users: u64 = records.iter().map(|r| r.new_users).sum();
    let exceptions: u64 = records.iter().map(|r| r.exceptions).sum();
    let time: f64 = records.iter().map(|r| r.time_on_site).sum();
    let visits: u64 = records.iter().map(|r| r.new_visits).sum();
    let zero_users = new_users == 0;
    let per_user = |v: f64| if zero_users { 0.0 } else { v / new_users as f64 };
    Ok(ReleaseAggregate {
        release: first.release.clone(),
        release_date: days_since_epoch(start),
        release_duration: (end - start).num_days() + 1,
        exceptions,
        new_users,
        usage_intensity: per_user(time),
        usage_frequency: per_user(visits as f64),
        zero_users,
    })
}

/// Group records by release, sort each group by date, correct new users,
/// and aggregate. Output is ordered by release date, then name.
pub fn aggregate_releases(records: &[UsageRecord]) -> Result<Vec<ReleaseAggregate>> {
    let mut groups: BTreeMap<&str, Vec<UsageRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.release.as_str()).or_default().push(r.clone());
    }
    let mut out = groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|r| r.date);
            aggregate_release(&correct_new_users(&g)?)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| (a.release_date, &a.release).cmp(&(b.release_date, &b.release)));
    Ok(out)
}

pub fn write_aggregates_csv<W: Write>(aggs: &[ReleaseAggregate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "release",
        RELEASE_DATE,
        RELEASE_DURATION,
        EXCEPTIONS,
        USAGE_INTENSITY,
        NEW_USERS,
        USAGE_FREQUENCY,
        "zero_users",
    ])?;
    for a in aggs {
        w.write_record([
            a.release.clone(),
            a.release_date.to_string(),
            a.release_duration.to_string(),
            a.exceptions.to_string(),
            format!("{:.6}", a.usage_intensity),
            a.new_users.to_string(),
            format!("{:.6}", a.usage_frequency),
            a.zero_users.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The six release variables, logged, in the order Release.Date,
/// Release.Duration, Exceptions, Usage.Intensity, New.Users, Usage.Frequency.
pub fn log_transform(aggs: &[ReleaseAggregate], policy: LogPolicy) -> Result<Dataset<f64>> {
    let raw: [(&str, fn(&ReleaseAggregate) -> f64); 6] = [
        (RELEASE_DATE, |a| a.release_date as f64),
        (RELEASE_DURATION, |a| a.release_duration as f64),
        (EXCEPTIONS, |a| a.exceptions as f64),
        (USAGE_INTENSITY, |a| a.usage_intensity),
        (NEW_USERS, |a| a.new_users as f64),
        (USAGE_FREQUENCY, |a| a.usage_frequency),
    ];
    logged_dataset(aggs, policy, &raw)
}

/// Logged Quality (exceptions per new user) with the usage and release
/// variables: Quality, New.Users, Usage.Intensity, Usage.Frequency,
/// Release.Date, Release.Duration. Releases without new users are rejected.
pub fn quality_dataset(aggs: &[ReleaseAggregate], policy: LogPolicy) -> Result<Dataset<f64>> {
    if let Some(a) = aggs.iter().find(|a| a.zero_users) {
        return Err(Error::InsufficientData(format!("release {} has no new users", a.release)));
    }
    let raw: [(&str, fn(&ReleaseAggregate) -> f64); 6] = [
        (QUALITY, |a| quality_metric(a.exceptions as f64, a.new_users as f64)),
        (NEW_USERS, |a| a.new_users as f64),
        (USAGE_INTENSITY, |a| a.usage_intensity),
        (USAGE_FREQUENCY, |a| a.usage_frequency),
        (RELEASE_DATE, |a| a.release_date as f64),
        (RELEASE_DURATION, |a| a.release_duration as f64),
    ];
    logged_dataset(aggs, policy, &raw)
}

fn logged_dataset(
    aggs: &[ReleaseAggregate],
    policy: LogPolicy,
    raw: &[(&str, fn(&ReleaseAggregate) -> f64)],
) -> Result<Dataset<f64>> {
    let columns = raw
        .iter()
        .map(|(name, get)| {
            let col = aggs
                .iter()
                .map(|a| policy.apply(get(a), name))
                .collect::<Result<Vec<f64>>>()?;
            Ok((*name, col))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_named_columns(columns)
}

/// Failures per unit of usage. 0 when there are no failures; `+inf` when
/// failures occur without usage.
pub fn quality_metric(failures: f64, usage: f64) -> f64 {
    if failures == 0.0 {
        0.0
    } else if usage == 0.0 {
        f64::INFINITY
    } else {
        failures / usage
    }
}

/// Downloads and cumulative issue counts for one package, one entry per day
/// from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub package: String,
    pub start: NaiveDate,
    /// `None` marks a day missing from the source.
    pub downloads: Vec<Option<u64>>,
    /// Issues created on or before each day.
    pub cumulative_issues: Vec<u64>,
    /// Issues created before `start`.
    pub prior_issues: u64,
}

impl DailySeries {
    pub fn new(
        package: impl Into<String>,
        start: NaiveDate,
        downloads: Vec<Option<u64>>,
        cumulative_issues: Vec<u64>,
        prior_issues: u64,
    ) -> Result<Self> {
        if downloads.len() != cumulative_issues.len() {
            return Err(Error::config(
                "cumulative_issues",
                format!("{} days, downloads has {}", cumulative_issues.len(), downloads.len()),
            ));
        }
        Ok(DailySeries {
            package: package.into(),
            start,
            downloads,
            cumulative_issues,
            prior_issues,
        })
    }

    pub fn len(&self) -> usize {
        self.downloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.downloads.is_empty()
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start + chrono::Days::new(i as u64)
    }

    /// Issues created each day. Decreases in the cumulative count are
    /// clamped to 0; the second value counts the clamped days.
    pub fn new_issues(&self) -> (Vec<u64>, usize) {
        let mut prev = self.prior_issues;
        let mut clamped = 0;
        let out = self
            .cumulative_issues
            .iter()
            .map(|&c| {
                let d = if c >= prev {
                    c - prev
                } else {
                    clamped += 1;
                    0
                };
                prev = c;
                d
            })
            .collect();
        (out, clamped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayFlag {
    Ok,
    /// Downloads missing for the day.
    Gap,
    /// No downloads and no issues: quality 0, left out of the trend fit.
    ZeroDownloads,
    /// Issues without downloads: quality is infinite.
    Infinite,
}

impl DayFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            DayFlag::Ok => "ok",
            DayFlag::Gap => "gap",
            DayFlag::ZeroDownloads => "zero_downloads",
            DayFlag::Infinite => "infinite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineRow {
    pub date: NaiveDate,
    pub downloads: Option<u64>,
    pub new_issues: u64,
    /// `None` on gap days, `+inf` on infinite days.
    pub quality: Option<f64>,
    pub trend: Option<f64>,
    pub flag: DayFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timeline {
    pub package: String,
    pub span: f64,
    pub rows: Vec<TimelineRow>,
    /// Why the trend is absent, when it is.
    pub trend_error: Option<String>,
    /// Days whose cumulative issue count went down.
    pub clamped_days: usize,
}

pub const DEFAULT_SPAN: f64 = 0.3;
pub const MIN_TREND_DAYS: usize = 10;

/// Daily quality (new issues per download) with a LOESS trend over the day
/// index. Days without downloads data or with zero downloads are excluded
/// from the trend fit; the trend is still evaluated on every day.
pub fn timeline(series: &DailySeries, span: f64) -> Result<Timeline> {
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::config("span", format!("must be positive, got {span}")));
    }
    let (new_issues, clamped_days) = series.new_issues();
    if clamped_days > 0 {
        log::warn!(
            "{}: cumulative issues decreased on {clamped_days} days; clamped to 0",
            series.package
        );
    }
    let mut rows: Vec<TimelineRow> = (0..series.len())
        .map(|i| {
            let downloads = series.downloads[i];
            let issues = new_issues[i];
            let (quality, flag) = match downloads {
                None => (None, DayFlag::Gap),
                Some(0) if issues > 0 => (Some(f64::INFINITY), DayFlag::Infinite),
                Some(0) => (Some(0.0), DayFlag::ZeroDownloads),
                Some(d) => (Some(quality_metric(issues as f64, d as f64)), DayFlag::Ok),
            };
            TimelineRow {
                date: series.date(i),
                downloads,
                new_issues: issues,
                quality,
                trend: None,
                flag,
            }
        })
        .collect();

    let (fx, fy): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.flag == DayFlag::Ok)
        .map(|(i, r)| (i as f64, r.quality.expect("ok day has quality")))
        .unzip();
    let trend_error = if fx.len() < MIN_TREND_DAYS {
        Some(format!("{} usable days, trend needs {MIN_TREND_DAYS}", fx.len()))
    } else {
        let at: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
        match loess(&fx, &fy, span, &at) {
            Ok(trend) => {
                for (r, t) in rows.iter_mut().zip(trend) {
                    r.trend = Some(t);
                }
                None
            }
            Err(e) => Some(e.to_string()),
        }
    };
    Ok(Timeline {
        package: series.package.clone(),
        span,
        rows,
        trend_error,
        clamped_days,
    })
}

impl Timeline {
    /// Quality of every day with downloads data, infinite days included.
    pub fn quality_values(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.quality).collect()
    }

    pub fn trend(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.trend).collect()
    }

    /// Columns `date,downloads,new_issues,quality,trend,flag`. Infinite
    /// quality is written as an empty cell with flag `infinite`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "downloads", "new_issues", "quality", "trend", "flag"])?;
        for r in &self.rows {
            w.write_record([
                r.date.to_string(),
                r.downloads.map(|d| d.to_string()).unwrap_or_default(),
                r.new_issues.to_string(),
                r.quality
                    .filter(|q| q.is_finite())
                    .map(|q| format!("{q:.9}"))
                    .unwrap_or_default(),
                r.trend.map(|t| format!("{t:.9}")).unwrap_or_default(),
                r.flag.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceScreen {
    pub slope: f64,
    /// Two-sided p-value of the downloads coefficient.
    pub p_value: f64,
    pub r2: f64,
    pub n: usize,
    pub with_date_control: bool,
}

/// OLS of daily new issues on daily downloads, optionally controlling for
/// the day index. Gap days are skipped.
pub fn screen_significance(series: &DailySeries, with_date_control: bool) -> Result<SignificanceScreen> {
    let (issues, _) = series.new_issues();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut t = Vec::new();
    for (i, d) in series.downloads.iter().enumerate() {
        if let Some(d) = d {
            y.push(issues[i] as f64);
            x.push(*d as f64);
            t.push(i as f64);
        }
    }
    if y.len() < MIN_TREND_DAYS {
        return Err(Error::InsufficientData(format!(
            "{} days with downloads, screen needs {MIN_TREND_DAYS}",
            y.len()
        )));
    }
    let mut preds: Vec<&[f64]> = vec![&x];
    if with_date_control {
        preds.push(&t);
    }
    let fit = ols(&y, &preds).map_err(|e| match e {
        OlsError::TooFewRows { needed, got } => Error::InsufficientRows {
            node: series.package.clone(),
            needed,
            got,
        },
        OlsError::RankDeficient => Error::RankDeficient {
            node: series.package.clone(),
        },
    })?;
    Ok(SignificanceScreen {
        slope: fit.coefficients[1],
        p_value: fit.p_values[1],
        r2: fit.r2,
        n: fit.n,
        with_date_control,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackageQuality {
    pub package: String,
    pub min: f64,
    pub median: f64,
    /// 90th percentile over finite days; `None` when every day is infinite.
    pub q90: Option<f64>,
    pub days: usize,
    pub infinite_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityDistribution {
    pub packages: Vec<PackageQuality>,
    /// Histogram of finite per-package medians.
    pub median_histogram: Vec<HistogramBin>,
    pub threshold: f64,
    pub median_above: usize,
    pub min_above: usize,
    pub q90_above: usize,
}

/// Per-package minimum, median and 90th percentile of daily quality, with
/// counts of packages above `threshold`. Quantiles interpolate linearly
/// between order statistics at `h = (n - 1) p`. Infinite days count toward
/// the minimum and median and are dropped for the 90th percentile.
pub fn quality_distribution(
    series: &[(String, Vec<f64>)],
    threshold: f64,
    bins: usize,
) -> Result<QualityDistribution> {
    if bins == 0 {
        return Err(Error::config("bins", "must be at least 1"));
    }
    let mut packages = Vec::with_capacity(series.len());
    for (name, values) in series {
        let mut v: Vec<f64> = values.iter().copied().filter(|q| !q.is_nan()).collect();
        if v.is_empty() {
            return Err(Error::InsufficientData(format!("package {name} has no quality values")));
        }
        v.sort_by(f64::total_cmp);
        let finite: Vec<f64> = v.iter().copied().filter(|q| q.is_finite()).collect();
        packages.push(PackageQuality {
            package: name.clone(),
            min: v[0],
            median: quantile_sorted(&v, 0.5),
            q90: (!finite.is_empty()).then(|| quantile_sorted(&finite, 0.9)),
            days: v.len(),
            infinite_days: v.len() - finite.len(),
        });
    }
    packages.sort_by(|a, b| a.package.cmp(&b.package));

    let medians: Vec<f64> = packages.iter().map(|p| p.median).filter(|m| m.is_finite()).collect();
    let median_histogram = histogram(&medians, bins);
    Ok(QualityDistribution {
        median_above: packages.iter().filter(|p| p.median > threshold).count(),
        min_above: packages.iter().filter(|p| p.min > threshold).count(),
        q90_above: packages.iter().filter(|p| p.q90.is_some_and(|q| q > threshold)).count(),
        packages,
        median_histogram,
        threshold,
    })
}

fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

impl QualityDistribution {
    /// Columns `package,days,infinite_days,min,median,q90,flag`. Infinite
    /// values are written as empty cells; `flag` is `ok`, `infinite_median`
    /// or `all_infinite`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["package", "days", "infinite_days", "min", "median", "q90", "flag"])?;
        let num = |v: f64| if v.is_finite() { format!("{v:.9}") } else { String::new() };
        for p in &self.packages {
            let flag = if p.q90.is_none() {
                "all_infinite"
            } else if p.median.is_infinite() {
                "infinite_median"
            } else {
                "ok"
            };
            w.write_record([
                p.package.clone(),
                p.days.to_string(),
                p.infinite_days.to_string(),
                num(p.min),
                num(p.median),
                p.q90.map(num).unwrap_or_default(),
                flag.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendDirection {
    Increasing,
    Decreasing,
    Flat,
}

/// Sign of last minus first trend value, flat when within
/// `rel_band * (max - min)` of zero or equal up to rounding.
pub fn direction_of_trend<T: Real>(trend: &[T], rel_band: f64) -> TrendDirection {
    let v: Vec<f64> = trend
        .iter()
        .map(|t| t.to_f64_lossy())
        .filter(|t| t.is_finite())
        .collect();
    let (Some(&first), Some(&last)) = (v.first(), v.last()) else {
        return TrendDirection::Flat;
    };
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta = last - first;
    if delta.abs() <= rel_band * (hi - lo) || delta.abs() <= 1e-12 * first.abs().max(last.abs()) {
        TrendDirection::Flat
    } else if delta > 0.0 {
        TrendDirection::Increasing
    } else {
        TrendDirection::Decreasing
    }
}

pub const DEFAULT_TREND_BAND: f64 = 1e-3;

/// Size and seed of a synthetic release set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticReleases {
    pub n: usize,
    pub seed: u64,
}

/// Synthetic release aggregates where exceptions are `q * new_users` and the
/// per-user rate `q` depends on the release date only. Usage variables follow
/// New.Users -> Release.Duration -> Usage.Intensity -> Usage.Frequency with
/// Release.Date -> Release.Duration.
pub fn synthetic_releases(spec: SyntheticReleases) -> Vec<ReleaseAggregate> {
    let mut rng = rng_from(spec.seed);
    (0..spec.n)
        .map(|k| {
            let mut z = || f64::standard_normal(&mut rng);
            let rd = z();
            let nu = z();
            let rdur = 1.2 * rd - nu + 0.6 * z();
            let ui = 0.9 * rdur + 0.6 * z();
            let uf = 0.8 * ui + 0.6 * z();
            let log_q = -2.0 + 1.2 * rd + 0.5 * z();
            let new_users = (9.0 + 0.6 * nu).exp().round().max(1.0) as u64;
            let exceptions = ((log_q.exp()) * new_users as f64).round() as u64;
            ReleaseAggregate {
                release: format!("r{k:04}"),
                release_date: 16_000 + (400.0 * (rd + 5.0)).round() as i64,
                release_duration: (4.0 + 0.5 * rdur).exp().round().max(1.0) as i64,
                exceptions,
                new_users,
                usage_intensity: (5.0 + 0.5 * ui).exp(),
                usage_frequency: (1.0 + 0.4 * uf).exp(),
                zero_users: false,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn rec(day: u32, users: u64, new_users: u64) -> UsageRecord {
        UsageRecord {
            date: NaiveDate::from_ymd_opt(2017, 3, day).unwrap(),
            release: "7.1".into(),
            new_users,
            users,
            new_visits: 0,
            visits: 0,
            time_on_site: 0.0,
            exceptions: 0,
        }
    }

    fn new_users(v: &[UsageRecord]) -> Vec<u64> {
        v.iter().map(|r| r.new_users).collect()
    }

    #[test]
    fn correction_examples() {
        let out = correct_new_users(&[rec(1, 5, 5), rec(2, 7, 0)]).unwrap();
        assert_eq!(new_users(&out), vec![5, 2]);
        let fine = vec![rec(1, 3, 4), rec(2, 2, 1)];
        assert_eq!(correct_new_users(&fine).unwrap(), fine);
        let out = correct_new_users(&[rec(1, 3, 3), rec(2, 3, 0), rec(3, 10, 0)]).unwrap();
        assert_eq!(new_users(&out), vec![3, 0, 7]);
        assert!(matches!(
            correct_new_users(&[rec(2, 1, 1), rec(1, 1, 1)]),
            Err(Error::UnsortedInput(1))
        ));
    }

    proptest! {
        #[test]
        fn correction_postcondition(days in proptest::collection::vec((0u64..50, 0u64..50), 1..30)) {
            let recs: Vec<UsageRecord> = days
                .iter()
                .enumerate()
                .map(|(i, &(u, nu))| rec(1 + i as u32 % 28, u, nu))
                .collect();
            let mut recs = recs;
            recs.sort_by_key(|r| r.date);
            let out = correct_new_users(&recs).unwrap();
            let mut cum = 0;
            for (a, b) in recs.iter().zip(&out) {
                cum += b.new_users;
                prop_assert!(cum >= b.users);
                prop_assert!(b.new_users >= a.new_users);
                prop_assert_eq!(a.users, b.users);
                prop_assert_eq!(a.date, b.date);
            }
        }

        #[test]
        fn quality_scales(f in 0.0f64..1e6, u in 1e-3f64..1e6, k in 1e-3f64..1e3) {
            let a = quality_metric(f, u);
            let b = quality_metric(k * f, k * u);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            prop_assert_eq!(quality_metric(0.0, u), 0.0);
        }

        #[test]
        fn aggregation_ignores_record_order(
            rows in proptest::collection::vec((1u32..28, 0u64..100, 0u64..100, 0.0f64..1e4, 0u64..20), 1..20),
            seed in 0u64..1000,
        ) {
            let recs: Vec<UsageRecord> = rows
                .iter()
                .map(|&(d, nu, v, t, e)| UsageRecord {
                    new_visits: v,
                    time_on_site: t,
                    exceptions: e,
                    ..rec(d, 0, nu)
                })
                .collect();
            let mut shuffled = recs.clone();
            let mut rng = rng_from(seed);
            for a in (1..shuffled.len()).rev() {
                shuffled.swap(a, rng.random_range(0..=a));
            }
            let a = aggregate_releases(&recs).unwrap();
            let b = aggregate_releases(&shuffled).unwrap();
            prop_assert_eq!(a.len(), 1);
            prop_assert_eq!(a[0].release_date, b[0].release_date);
            prop_assert_eq!(a[0].exceptions, b[0].exceptions);
            prop_assert_eq!(a[0].new_users, b[0].new_users);
            prop_assert!((a[0].usage_intensity - b[0].usage_intensity).abs() <= 1e-9 * a[0].usage_intensity.max(1.0));
        }
    }

    #[test]
    fn aggregation_examples() {
        let one = UsageRecord {
            new_users: 10,
            users: 10,
            time_on_site: 1000.0,
            new_visits: 20,
            visits: 20,
            exceptions: 5,
            ..rec(1, 10, 10)
        };
        let a = aggregate_release(std::slice::from_ref(&one)).unwrap();
        assert_eq!(a.usage_intensity, 100.0);
        assert_eq!(a.usage_frequency, 2.0);
        assert_eq!(a.release_duration, 1);
        assert_eq!(a.exceptions, 5);
        assert_eq!(a.release_date, days_since_epoch(one.date));

        let b = aggregate_release(&[rec(3, 1, 1), rec(9, 1, 1)]).unwrap();
        assert_eq!(b.release_duration, 7);

        let z = aggregate_release(&[rec(3, 0, 0)]).unwrap();
        assert!(z.zero_users);
        assert_eq!(z.usage_intensity, 0.0);
        assert!(matches!(aggregate_release(&[]), Err(Error::EmptyRelease)));
        assert_eq!(days_since_epoch(NaiveDate::from_ymd_opt(1970, 1, 11).unwrap()), 10);
    }

    fn agg(exceptions: u64, new_users: u64) -> ReleaseAggregate {
        ReleaseAggregate {
            release: "x".into(),
            release_date: 17_000,
            release_duration: 3,
            exceptions,
            new_users,
            usage_intensity: 2.0,
            usage_frequency: 1.5,
            zero_users: false,
        }
    }

    #[test]
    fn log_policies() {
        let aggs = vec![agg(0, 10), agg(4, 20)];
        let d = log_transform(&aggs, LogPolicy::Log1p).unwrap();
        assert_eq!(d.column_by_name(EXCEPTIONS).unwrap()[0], 0.0);
        assert_eq!(d.variables().names()[0], RELEASE_DATE);
        assert!(matches!(
            log_transform(&aggs, LogPolicy::StrictLog),
            Err(Error::NonPositiveValue { .. })
        ));
        let nu = d.column_by_name(NEW_USERS).unwrap();
        assert!(nu[0] < nu[1]);
        let q = quality_dataset(&aggs, LogPolicy::Log1p).unwrap();
        assert!((q.column_by_name(QUALITY).unwrap()[1] - 0.2f64.ln_1p()).abs() < 1e-15);
    }

    #[test]
    fn quality_metric_examples() {
        assert_eq!(quality_metric(10.0, 5.0), 2.0);
        assert_eq!(quality_metric(0.0, 0.0), 0.0);
        assert_eq!(quality_metric(3.0, 0.0), f64::INFINITY);
    }

    fn series(downloads: Vec<Option<u64>>, cumulative: Vec<u64>) -> DailySeries {
        DailySeries::new("pkg", NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(), downloads, cumulative, 0).unwrap()
    }

    #[test]
    fn flat_timeline() {
        let s = series(vec![Some(50); 20], (1..=20).map(|i| 2 * i).collect());
        let t = timeline(&s, DEFAULT_SPAN).unwrap();
        assert!(t.trend_error.is_none());
        for r in &t.rows {
            assert_eq!(r.quality, Some(0.04));
            assert!((r.trend.unwrap() - 0.04).abs() < 1e-12);
        }
        assert_eq!(direction_of_trend(&t.trend().unwrap(), DEFAULT_TREND_BAND), TrendDirection::Flat);
    }

    #[test]
    fn linear_quality_trend_is_reproduced() {
        // downloads 1000, new issues 10 + i: quality is linear in the day
        let mut cum = 0;
        let cumulative: Vec<u64> = (0..30)
            .map(|i| {
                cum += 10 + i;
                cum
            })
            .collect();
        let t = timeline(&series(vec![Some(1000); 30], cumulative), DEFAULT_SPAN).unwrap();
        for (i, r) in t.rows.iter().enumerate().skip(1).take(28) {
            assert!((r.trend.unwrap() - (10 + i) as f64 / 1000.0).abs() < 1e-6);
        }
        assert_eq!(
            direction_of_trend(&t.trend().unwrap(), DEFAULT_TREND_BAND),
            TrendDirection::Increasing
        );
    }

    #[test]
    fn flags_and_csv() {
        let mut downloads = vec![Some(10); 12];
        downloads[2] = Some(0);
        downloads[4] = None;
        downloads[6] = Some(0);
        let cumulative = vec![1, 2, 3, 3, 4, 5, 5, 4, 5, 6, 7, 8];
        let t = timeline(&series(downloads, cumulative), DEFAULT_SPAN).unwrap();
        assert_eq!(t.rows[2].flag, DayFlag::Infinite);
        assert_eq!(t.rows[2].quality, Some(f64::INFINITY));
        assert_eq!(t.rows[4].flag, DayFlag::Gap);
        assert_eq!(t.rows[6].flag, DayFlag::ZeroDownloads);
        assert_eq!(t.rows[7].new_issues, 0);
        assert_eq!(t.clamped_days, 1);
        // 12 days minus 3 excluded leaves 9 usable: no trend
        assert!(t.trend_error.is_some());
        assert!(t.rows.iter().all(|r| r.trend.is_none()));

        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "date,downloads,new_issues,quality,trend,flag");
        assert_eq!(lines[1], "2016-01-01,10,1,0.100000000,,ok");
        assert_eq!(lines[3], "2016-01-03,0,1,,,infinite");
        assert_eq!(lines[5], "2016-01-05,,1,,,gap");
    }

    #[test]
    fn screen_detects_proportional_issues() {
        let mut rng = rng_from(1);
        let downloads: Vec<u64> = (0..60).map(|_| rng.random_range(100..1000)).collect();
        let mut cum = 0;
        let cumulative = downloads
            .iter()
            .map(|d| {
                cum += d / 50;
                cum
            })
            .collect();
        let s = series(downloads.into_iter().map(Some).collect(), cumulative);
        let sc = screen_significance(&s, false).unwrap();
        assert!(sc.p_value < 1e-6);
        assert!(screen_significance(&series(vec![Some(1); 5], vec![0; 5]), false).is_err());
    }

    #[test]
    fn date_control_raises_r2_on_trending_downloads() {
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = rng_from(50 + seed);
            let n = 120;
            // bot downloads grow with time; issues follow the calendar, not downloads
            let downloads: Vec<u64> = (0..n).map(|i| 200 + 5 * i + rng.random_range(0..1000)).collect();
            let mut cum = 0;
            let cumulative = (0..n)
                .map(|i| {
                    cum += (i as f64 / 10.0 + rng.random_range(0.0..4.0)) as u64;
                    cum
                })
                .collect();
            let s = series(downloads.into_iter().map(Some).collect(), cumulative);
            let plain = screen_significance(&s, false).unwrap();
            let dated = screen_significance(&s, true).unwrap();
            if dated.r2 > plain.r2 + 0.05 {
                wins += 1;
            }
        }
        assert!(wins >= 18, "{wins}");
    }

    #[test]
    fn distribution_rules() {
        let d = quality_distribution(&[("a".into(), vec![0.7; 5])], 1.0, 4).unwrap();
        let p = &d.packages[0];
        assert_eq!((p.min, p.median, p.q90), (0.7, 0.7, Some(0.7)));

        let d = quality_distribution(&[("b".into(), vec![0.0, 0.0, 0.0, 10.0])], 1.0, 4).unwrap();
        let p = &d.packages[0];
        assert_eq!(p.median, 0.0);
        // h = 0.9 * 3 = 2.7: 0 + 0.7 * (10 - 0)
        assert!((p.q90.unwrap() - 7.0).abs() < 1e-12);

        let d = quality_distribution(
            &[
                ("x".into(), vec![2.0, 3.0, f64::INFINITY]),
                ("y".into(), vec![0.5, 0.5]),
                ("z".into(), vec![f64::INFINITY, 1.5, 1.2]),
            ],
            1.0,
            2,
        )
        .unwrap();
        assert_eq!(d.median_above, 2);
        assert_eq!(d.min_above, 2);
        assert_eq!(d.q90_above, 2);
        let x = &d.packages[0];
        assert_eq!(x.infinite_days, 1);
        assert!((x.q90.unwrap() - 2.9).abs() < 1e-12);
        assert_eq!(d.median_histogram.iter().map(|b| b.count).sum::<usize>(), 3);
    }

    #[test]
    fn trend_direction_band() {
        let rising: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(direction_of_trend(&rising, 1e-3), TrendDirection::Increasing);
        let falling: Vec<f64> = rising.iter().rev().copied().collect();
        assert_eq!(direction_of_trend(&falling, 1e-3), TrendDirection::Decreasing);
        assert_eq!(direction_of_trend(&[3.0; 8], 1e-3), TrendDirection::Flat);
        let hump = [0.0, 5.0, 10.0, 5.0, 0.001];
        assert_eq!(direction_of_trend(&hump, 1e-3), TrendDirection::Flat);
        let hump = [0.0, 5.0, 10.0, 5.0, 0.02];
        assert_eq!(direction_of_trend(&hump, 1e-3), TrendDirection::Increasing);
    }

    #[test]
    fn normalized_quality_is_usage_independent() {
        use crate::search::{averaged_network, bootstrap_average, Learner, Observations};
        use crate::HcConfig;
        let learner = Learner::HillClimb(HcConfig::default());
        for seed in 0..5 {
            let aggs = synthetic_releases(SyntheticReleases { n: 200, seed });
            let q = quality_dataset(&aggs, LogPolicy::Log1p).unwrap();
            let conf = bootstrap_average(&Observations::Continuous(q.clone()), &learner, 30, seed).unwrap();
            let net = averaged_network(&conf, 0.85);
            let v = q.variables();
            let qi = v.require(QUALITY).unwrap();
            for name in [NEW_USERS, USAGE_INTENSITY, USAGE_FREQUENCY] {
                assert!(!net.dag.adjacent(qi, v.require(name).unwrap()), "seed {seed}: {name}");
            }
            let raw = log_transform(&aggs, LogPolicy::Log1p).unwrap();
            let conf = bootstrap_average(&Observations::Continuous(raw.clone()), &learner, 30, seed).unwrap();
            let net = averaged_network(&conf, 0.85);
            let v = raw.variables();
            assert!(net.dag.has_edge(v.require(NEW_USERS).unwrap(), v.require(EXCEPTIONS).unwrap()));
        }
    }
}
