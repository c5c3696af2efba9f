use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use relqual_ingest::{
    build_daily_series, fetch_downloads, fetch_issues, for_each_package, write_series_csv, Cache, Client,
    DownloadSeries, FetchSpec, FixtureTransport, LiveTransport, OfflineTransport, PackageSpec, Transport,
};

use crate::manifest::{package_file_stem, RunContext, RunStatus};
use crate::settings::FetchSettings;

/// Environment variable holding the issue-tracker token. It is read at run
/// time only and never written to outputs or the manifest.
pub const TOKEN_ENV: &str = "RELQUAL_ISSUES_TOKEN";

struct Fetched {
    downloads: DownloadSeries,
    issues: Option<usize>,
    csv: Vec<u8>,
}

pub fn to_spec(s: &FetchSettings) -> anyhow::Result<FetchSpec> {
    s.validate()?;
    let packages = s
        .packages
        .iter()
        .map(|p| p.parse::<PackageSpec>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = FetchSpec::new(
        packages,
        s.start.expect("validated"),
        s.end.expect("validated"),
        s.cache_dir.clone(),
    );
    spec.downloads_base = s.downloads_base.clone();
    spec.issues_base = s.issues_base.clone();
    spec.chunk_days = s.chunk_days;
    spec.include_pull_requests = s.include_pull_requests;
    spec.max_in_flight = s.max_in_flight;
    spec.validate().map_err(|e| anyhow::anyhow!("{e}").context("fetch"))?;
    Ok(spec)
}

pub fn run(s: &FetchSettings, ctx: &mut RunContext) -> anyhow::Result<RunStatus> {
    let spec = to_spec(s)?;
    let transport: Arc<dyn Transport> = match &s.fixtures {
        Some(p) => {
            ctx.input(p)?;
            Arc::new(FixtureTransport::from_json_file(p).with_context(|| format!("loading {}", p.display()))?)
        }
        None if s.live => Arc::new(LiveTransport::new(Duration::from_secs(60))),
        None => Arc::new(OfflineTransport),
    };
    let live = s.live || s.fixtures.is_some();
    let cache = Cache::open(&spec.cache_dir).with_context(|| format!("opening cache {}", spec.cache_dir.display()))?;
    let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
    let client = Client::new(transport, cache, live).with_token(token);

    let results = for_each_package(&spec, |p| {
        let downloads = fetch_downloads(&client, &spec, &p.name)?;
        let issue_dates = match &p.repo {
            Some(_) => Some(fetch_issues(&client, &spec, p)?),
            None => None,
        };
        let series = build_daily_series(&downloads, issue_dates.as_deref().unwrap_or(&[]));
        let mut csv = Vec::new();
        write_series_csv(&series, &mut csv)?;
        Ok(Fetched {
            downloads,
            issues: issue_dates.map(|d| d.len()),
            csv,
        })
    });

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(f) => ok.push((name, f)),
            Err(e) => {
                log::error!("{name}: {e}");
                failures.push((name, e.to_string()));
            }
        }
    }
    for (name, f) in &ok {
        ctx.write(&format!("series/{}.csv", package_file_stem(name)), |w| Ok(w.write_all(&f.csv)?))?;
    }
    ctx.write("gaps.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["package", "date"])?;
        for (name, f) in &ok {
            for d in f.downloads.gaps() {
                c.write_record([name.clone(), d.to_string()])?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    ctx.write("summary.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["package", "days", "gaps", "issues", "monthly_downloads", "popular"])?;
        for (name, f) in &ok {
            let monthly = f.downloads.monthly_downloads();
            c.write_record([
                name.clone(),
                f.downloads.counts.len().to_string(),
                f.downloads.gaps().len().to_string(),
                f.issues.map(|n| n.to_string()).unwrap_or_default(),
                monthly.map(|m| format!("{m:.3}")).unwrap_or_default(),
                monthly.is_some_and(|m| m > s.popularity_threshold).to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    ctx.write("failures.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["package", "error"])?;
        for (name, e) in &failures {
            c.write_record([name, e])?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(match (ok.is_empty(), failures.is_empty()) {
        (_, true) => RunStatus::Ok,
        (true, false) => RunStatus::Failed,
        (false, false) => RunStatus::Partial,
    })
}
