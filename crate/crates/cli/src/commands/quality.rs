use std::path::Path;

use anyhow::Context;
use relqual_core::quality::{
    aggregate_releases, direction_of_trend, log_transform, quality_dataset, quality_distribution, quality_metric,
    screen_significance, timeline, write_aggregates_csv, EXCEPTIONS, NEW_USERS, RELEASE_DATE, RELEASE_DURATION,
    USAGE_FREQUENCY, USAGE_INTENSITY,
};
use relqual_core::regression::{fit_power_law, PowerLawFit};
use relqual_core::{DailySeries, Dataset, ReleaseAggregate, Timeline};
use relqual_ingest::{load_usage_csv, read_series_csv};

use crate::manifest::{package_file_stem, RunContext, RunStatus};
use crate::settings::QualitySettings;

pub fn run(s: &QualitySettings, ctx: &mut RunContext) -> anyhow::Result<RunStatus> {
    s.validate()?;
    let mut power = Vec::new();
    if let Some(path) = &s.usage {
        ctx.input(path)?;
        let records = load_usage_csv(path).with_context(|| format!("loading {}", path.display()))?;
        let aggs = aggregate_releases(&records)?;
        releases(s, &aggs, ctx)?;
        if s.power_law {
            power.push(("releases".to_string(), release_power_law(s, &aggs)?));
        }
    }

    let mut failures = Vec::new();
    let mut loaded = Vec::new();
    for path in &s.series {
        match load_series(path) {
            Ok(series) => {
                ctx.input(path)?;
                loaded.push(series);
            }
            Err(e) => failures.push((path.display().to_string(), format!("{e:#}"))),
        }
    }
    if !s.series.is_empty() {
        series_outputs(s, &loaded, &mut failures, ctx)?;
        if s.power_law {
            match package_power_law(s, &loaded) {
                Ok(fit) => power.push(("packages".to_string(), fit)),
                Err(e) => log::warn!("package power law skipped: {e:#}"),
            }
        }
        ctx.write("failures.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["input", "error"])?;
            for (input, e) in &failures {
                c.write_record([input, e])?;
            }
            c.flush()?;
            Ok(())
        })?;
    }
    if s.power_law {
        write_power_law(&power, ctx)?;
    }
    Ok(if failures.is_empty() {
        RunStatus::Ok
    } else if loaded.is_empty() && s.usage.is_none() {
        RunStatus::Failed
    } else {
        RunStatus::Partial
    })
}

fn load_series(path: &Path) -> anyhow::Result<DailySeries> {
    let package = path
        .file_stem()
        .and_then(|s| s.to_str())
        .context("series file name is not valid UTF-8")?;
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_series_csv(file, package)?)
}

fn releases(s: &QualitySettings, aggs: &[ReleaseAggregate], ctx: &mut RunContext) -> anyhow::Result<()> {
    ctx.write("aggregates.csv", |w| Ok(write_aggregates_csv(aggs, w)?))?;
    let logged = log_transform(aggs, s.log_policy)?;
    ctx.write("logged.csv", |w| Ok(logged.write_csv(w)?))?;
    ctx.write("quality.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["release", "exceptions", "new_users", "quality", "flag"])?;
        for a in aggs {
            let q = quality_metric(a.exceptions as f64, a.new_users as f64);
            let (cell, flag) = if q.is_finite() {
                (format!("{q:.9}"), "ok")
            } else {
                (String::new(), "infinite")
            };
            c.write_record([a.release.clone(), a.exceptions.to_string(), a.new_users.to_string(), cell, flag.into()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let usable: Vec<ReleaseAggregate> = aggs.iter().filter(|a| !a.zero_users).cloned().collect();
    if usable.len() < aggs.len() {
        log::warn!(
            "{} releases without new users left out of quality_dataset.csv",
            aggs.len() - usable.len()
        );
    }
    let qd = quality_dataset(&usable, s.log_policy)?;
    ctx.write("quality_dataset.csv", |w| Ok(qd.write_csv(w)?))
}

fn release_power_law(s: &QualitySettings, aggs: &[ReleaseAggregate]) -> anyhow::Result<PowerLawFit> {
    let data = Dataset::from_named_columns(vec![
        (RELEASE_DATE, aggs.iter().map(|a| a.release_date as f64).collect()),
        (RELEASE_DURATION, aggs.iter().map(|a| a.release_duration as f64).collect()),
        (EXCEPTIONS, aggs.iter().map(|a| a.exceptions as f64).collect()),
        (USAGE_INTENSITY, aggs.iter().map(|a| a.usage_intensity).collect()),
        (NEW_USERS, aggs.iter().map(|a| a.new_users as f64).collect()),
        (USAGE_FREQUENCY, aggs.iter().map(|a| a.usage_frequency).collect()),
    ])?;
    let controls: Vec<&str> = s.power_law_controls.iter().map(String::as_str).collect();
    Ok(fit_power_law(&data, EXCEPTIONS, NEW_USERS, &controls, s.log_policy)?)
}

/// Total new issues against total downloads across packages.
fn package_power_law(s: &QualitySettings, series: &[DailySeries]) -> anyhow::Result<PowerLawFit> {
    let issues: Vec<f64> = series.iter().map(|x| x.new_issues().0.iter().sum::<u64>() as f64).collect();
    let downloads: Vec<f64> = series
        .iter()
        .map(|x| x.downloads.iter().flatten().sum::<u64>() as f64)
        .collect();
    let data = Dataset::from_named_columns(vec![("issues", issues), ("downloads", downloads)])?;
    Ok(fit_power_law(&data, "issues", "downloads", &[], s.log_policy)?)
}

fn write_power_law(fits: &[(String, PowerLawFit)], ctx: &mut RunContext) -> anyhow::Result<()> {
    ctx.write("power_law.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "set", "response", "driver", "exponent", "std_error", "ci_low", "ci_high", "p_value", "r2", "n",
        ])?;
        for (set, f) in fits {
            c.write_record([
                set.clone(),
                f.response.clone(),
                f.driver.clone(),
                format!("{:.6}", f.exponent),
                format!("{:.6}", f.std_error),
                format!("{:.6}", f.ci_low),
                format!("{:.6}", f.ci_high),
                format!("{:.6e}", f.p_value),
                format!("{:.6}", f.r2),
                f.n.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })
}

fn series_outputs(
    s: &QualitySettings,
    series: &[DailySeries],
    failures: &mut Vec<(String, String)>,
    ctx: &mut RunContext,
) -> anyhow::Result<()> {
    let mut timelines: Vec<Timeline> = Vec::new();
    for x in series {
        match timeline(x, s.span) {
            Ok(t) => timelines.push(t),
            Err(e) => failures.push((x.package.clone(), e.to_string())),
        }
    }
    for t in &timelines {
        ctx.write(&format!("timelines/{}.csv", package_file_stem(&t.package)), |w| Ok(t.write_csv(w)?))?;
    }
    ctx.write("trends.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["package", "direction", "first", "last", "clamped_days", "note"])?;
        for t in &timelines {
            let (dir, first, last) = match t.trend() {
                Some(tr) => (
                    format!("{:?}", direction_of_trend(&tr, s.trend_band)).to_lowercase(),
                    format!("{:.9}", tr[0]),
                    format!("{:.9}", tr[tr.len() - 1]),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            c.write_record([
                t.package.clone(),
                dir,
                first,
                last,
                t.clamped_days.to_string(),
                t.trend_error.clone().unwrap_or_default(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    ctx.write("screen.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["package", "date_control", "slope", "p_value", "r2", "n", "significant"])?;
        for x in series {
            for control in [false, true] {
                match screen_significance(x, control) {
                    Ok(r) => c.write_record([
                        x.package.clone(),
                        control.to_string(),
                        format!("{:.9e}", r.slope),
                        format!("{:.6e}", r.p_value),
                        format!("{:.6}", r.r2),
                        r.n.to_string(),
                        (r.p_value < 0.05).to_string(),
                    ])?,
                    Err(e) => log::warn!("{}: screen skipped: {e}", x.package),
                }
            }
        }
        c.flush()?;
        Ok(())
    })?;

    let values: Vec<(String, Vec<f64>)> = timelines
        .iter()
        .map(|t| (t.package.clone(), t.quality_values()))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Ok(());
    }
    let dist = quality_distribution(&values, s.threshold, s.bins)?;
    ctx.write("distribution.csv", |w| Ok(dist.write_csv(w)?))?;
    ctx.write("histogram.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["lo", "hi", "count"])?;
        for b in &dist.median_histogram {
            c.write_record([format!("{:.9}", b.lo), format!("{:.9}", b.hi), b.count.to_string()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    ctx.write("threshold_counts.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["threshold", "packages", "median_above", "min_above", "q90_above"])?;
        c.write_record([
            dist.threshold.to_string(),
            dist.packages.len().to_string(),
            dist.median_above.to_string(),
            dist.min_above.to_string(),
            dist.q90_above.to_string(),
        ])?;
        c.flush()?;
        Ok(())
    })
}
