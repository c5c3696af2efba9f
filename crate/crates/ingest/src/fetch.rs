//! Daily download counts and issue creation dates per package.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::Client;
use crate::error::{Error, Result};

pub const DEFAULT_DOWNLOADS_BASE: &str = "https://api.npmjs.org";
pub const DEFAULT_ISSUES_BASE: &str = "https://api.github.com";
pub const ISSUES_PER_PAGE: usize = 100;

/// A package and, for issue timelines, its `owner/repo`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageSpec {
    pub name: String,
    pub repo: Option<String>,
}

impl FromStr for PackageSpec {
    type Err = Error;

    /// `name` or `name=owner/repo`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, repo) = match s.split_once('=') {
            Some((n, r)) => (n.trim(), Some(r.trim())),
            None => (s.trim(), None),
        };
        if name.is_empty() {
            return Err(Error::spec("packages", format!("empty package name in {s:?}")));
        }
        if let Some(r) = repo {
            let parts: Vec<&str> = r.split('/').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(Error::spec("packages", format!("repo must be owner/name, got {r:?}")));
            }
        }
        Ok(PackageSpec {
            name: name.to_string(),
            repo: repo.map(str::to_string),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchSpec {
    pub packages: Vec<PackageSpec>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub downloads_base: String,
    pub issues_base: String,
    pub cache_dir: PathBuf,
    /// Longest date range per downloads request.
    pub chunk_days: usize,
    pub include_pull_requests: bool,
    /// Packages fetched concurrently.
    pub max_in_flight: usize,
}

impl FetchSpec {
    pub fn new(packages: Vec<PackageSpec>, start: NaiveDate, end: NaiveDate, cache_dir: PathBuf) -> Self {
        FetchSpec {
            packages,
            start,
            end,
            downloads_base: DEFAULT_DOWNLOADS_BASE.to_string(),
            issues_base: DEFAULT_ISSUES_BASE.to_string(),
            cache_dir,
            chunk_days: 365,
            include_pull_requests: false,
            max_in_flight: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.packages.is_empty() {
            return Err(Error::spec("packages", "must not be empty"));
        }
        if self.start > self.end {
            return Err(Error::spec("start", format!("{} is after end {}", self.start, self.end)));
        }
        if self.chunk_days == 0 {
            return Err(Error::spec("chunk_days", "must be at least 1"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::spec("max_in_flight", "must be at least 1"));
        }
        Ok(())
    }

    pub fn n_days(&self) -> usize {
        ((self.end - self.start).num_days() + 1) as usize
    }
}

/// Consecutive inclusive date ranges of at most `chunk_days` covering
/// `start..=end`.
pub fn date_chunks(start: NaiveDate, end: NaiveDate, chunk_days: usize) -> Vec<(NaiveDate, NaiveDate)> {
    let mut out = Vec::new();
    let mut a = start;
    while a <= end {
        let b = (a + chrono::Days::new(chunk_days as u64 - 1)).min(end);
        out.push((a, b));
        a = b + chrono::Days::new(1);
    }
    out
}

pub fn downloads_url(base: &str, package: &str, start: NaiveDate, end: NaiveDate) -> String {
    format!("{}/downloads/range/{start}:{end}/{package}", base.trim_end_matches('/'))
}

pub fn issues_url(base: &str, repo: &str) -> String {
    format!(
        "{}/repos/{repo}/issues?state=all&per_page={ISSUES_PER_PAGE}&page=1",
        base.trim_end_matches('/')
    )
}

/// Daily downloads over a date range; `None` where the source had no entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DownloadSeries {
    pub package: String,
    pub start: NaiveDate,
    pub counts: Vec<Option<u64>>,
}

impl DownloadSeries {
    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Days::new(self.counts.len() as u64 - 1)
    }

    pub fn gaps(&self) -> Vec<NaiveDate> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| self.start + chrono::Days::new(i as u64))
            .collect()
    }

    /// Mean daily downloads over days with data, times 30.
    pub fn monthly_downloads(&self) -> Option<f64> {
        let v: Vec<u64> = self.counts.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<u64>() as f64 / v.len() as f64 * 30.0)
    }
}

#[derive(Deserialize)]
struct DownloadsBody {
    downloads: Vec<DayCount>,
}

#[derive(Deserialize)]
struct DayCount {
    day: NaiveDate,
    downloads: u64,
}

/// Daily downloads for one package, requested in chunks of
/// `spec.chunk_days` and merged. Missing days stay `None`.
pub fn fetch_downloads(client: &Client, spec: &FetchSpec, package: &str) -> Result<DownloadSeries> {
    spec.validate()?;
    let mut by_day: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for (a, b) in date_chunks(spec.start, spec.end, spec.chunk_days) {
        let url = downloads_url(&spec.downloads_base, package, a, b);
        let entry = client.get(&url)?;
        let body: DownloadsBody = serde_json::from_slice(&entry.body).map_err(|e| Error::Payload {
            url: url.clone(),
            message: e.to_string(),
        })?;
        for d in body.downloads {
            if d.day >= a && d.day <= b {
                by_day.insert(d.day, d.downloads);
            }
        }
    }
    let counts = (0..spec.n_days())
        .map(|i| by_day.get(&(spec.start + chrono::Days::new(i as u64))).copied())
        .collect();
    Ok(DownloadSeries {
        package: package.to_string(),
        start: spec.start,
        counts,
    })
}

#[derive(Deserialize)]
struct IssueItem {
    created_at: String,
    #[serde(default)]
    pull_request: Option<serde_json::Value>,
}

/// Targets of a `Link` header by relation.
pub fn parse_link_header(link: &str) -> BTreeMap<String, String> {
    link.split(',')
        .filter_map(|part| {
            let (url, rest) = part.split_once(';')?;
            let url = url.trim().trim_start_matches('<').trim_end_matches('>');
            let rel = rest
                .split(';')
                .find_map(|p| p.trim().strip_prefix("rel="))?
                .trim_matches('"');
            Some((rel.to_string(), url.to_string()))
        })
        .collect()
}

fn page_number(url: &str) -> Option<usize> {
    let query = url.split_once('?')?.1;
    query
        .split('&')
        .find_map(|kv| kv.strip_prefix("page="))
        .and_then(|p| p.parse().ok())
}

/// Creation dates of all issues (open and closed) of the package's repo,
/// following `next` links to the end. Pull requests are dropped unless
/// `spec.include_pull_requests`. Sorted ascending.
pub fn fetch_issues(client: &Client, spec: &FetchSpec, package: &PackageSpec) -> Result<Vec<NaiveDate>> {
    let repo = package
        .repo
        .as_deref()
        .ok_or_else(|| Error::spec("packages", format!("{} has no repo for issues", package.name)))?;
    let first = issues_url(&spec.issues_base, repo);
    let mut url = first.clone();
    let mut expected: Option<usize> = None;
    let mut pages = 0;
    let mut dates = Vec::new();
    loop {
        let entry = client.get(&url)?;
        pages += 1;
        let items: Vec<IssueItem> = serde_json::from_slice(&entry.body).map_err(|e| Error::Payload {
            url: url.clone(),
            message: e.to_string(),
        })?;
        for it in items {
            if it.pull_request.is_some() && !spec.include_pull_requests {
                continue;
            }
            let day = it
                .created_at
                .get(..10)
                .and_then(|d| d.parse::<NaiveDate>().ok())
                .ok_or_else(|| Error::Payload {
                    url: url.clone(),
                    message: format!("bad created_at {:?}", it.created_at),
                })?;
            dates.push(day);
        }
        let links = entry.link.as_deref().map(parse_link_header).unwrap_or_default();
        if let Some(last) = links.get("last").and_then(|u| page_number(u)) {
            expected = Some(expected.map_or(last, |e: usize| e.max(last)));
        }
        match links.get("next") {
            Some(next) if pages < 100_000 => url = next.clone(),
            _ => break,
        }
    }
    if let Some(e) = expected {
        if pages < e {
            return Err(Error::TruncatedPagination {
                url: first,
                got: pages,
                expected: e,
            });
        }
    }
    dates.sort();
    Ok(dates)
}

/// Run `f` for every package with at most `spec.max_in_flight` at once.
/// Results keep the package order; one failure does not stop the others.
pub fn for_each_package<T, F>(spec: &FetchSpec, f: F) -> Vec<(String, Result<T>)>
where
    T: Send,
    F: Fn(&PackageSpec) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.max_in_flight)
        .build()
        .expect("thread pool");
    pool.install(|| {
        spec.packages
            .par_iter()
            .map(|p| (p.name.clone(), f(p)))
            .collect()
    })
}

/// Packages with monthly downloads strictly above `threshold`.
pub fn filter_popular(monthly: &[(String, f64)], threshold: f64) -> Vec<String> {
    monthly
        .iter()
        .filter(|(_, m)| *m > threshold)
        .map(|(p, _)| p.clone())
        .collect()
}

pub const POPULARITY_THRESHOLD: f64 = 10_000.0;
