use std::sync::Arc;

use chrono::NaiveDate;
use relqual_ingest::fetch::{downloads_url, issues_url};
use relqual_ingest::{
    build_daily_series, fetch_downloads, fetch_issues, for_each_package, write_series_csv, Cache, Client, Error,
    FetchSpec, FixtureTransport, OfflineTransport, PackageSpec, Response,
};

const DL: &str = "http://downloads.test";
const GH: &str = "http://issues.test";

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn spec(dir: &std::path::Path, packages: &[&str], start: &str, end: &str, chunk: usize) -> FetchSpec {
    let mut s = FetchSpec::new(
        packages.iter().map(|p| p.parse().unwrap()).collect(),
        d(start),
        d(end),
        dir.to_path_buf(),
    );
    s.downloads_base = DL.into();
    s.issues_base = GH.into();
    s.chunk_days = chunk;
    s
}

fn downloads_body(package: &str, start: NaiveDate, end: NaiveDate, skip: &[NaiveDate]) -> String {
    let mut days = Vec::new();
    let mut day = start;
    while day <= end {
        if !skip.contains(&day) {
            let n = 100 + (day - d("2016-01-01")).num_days() * 7 % 53;
            days.push(format!("{{\"downloads\":{n},\"day\":\"{day}\"}}"));
        }
        day = day + chrono::Days::new(1);
    }
    format!(
        "{{\"start\":\"{start}\",\"end\":\"{end}\",\"package\":\"{package}\",\"downloads\":[{}]}}",
        days.join(",")
    )
}

fn client(t: Arc<FixtureTransport>, dir: &std::path::Path, live: bool) -> Client {
    Client::new(t, Cache::open(dir).unwrap(), live).with_sleeper(Arc::new(|_| {}))
}

#[test]
fn warm_cache_replays_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &["pkg"], "2016-01-01", "2016-01-31", 365);
    let t = Arc::new(FixtureTransport::new());
    t.insert(
        downloads_url(DL, "pkg", s.start, s.end),
        Response::ok(downloads_body("pkg", s.start, s.end, &[])),
    );
    let first = fetch_downloads(&client(t.clone(), dir.path(), true), &s, "pkg").unwrap();
    assert_eq!(first.counts.len(), 31);
    assert!(first.gaps().is_empty());
    assert_eq!(t.calls(), 1);

    let offline = Client::new(Arc::new(OfflineTransport), Cache::open(dir.path()).unwrap(), false);
    let replay = fetch_downloads(&offline, &s, "pkg").unwrap();
    assert_eq!(replay, first);

    let mut a = Vec::new();
    let mut b = Vec::new();
    write_series_csv(&build_daily_series(&first, &[]), &mut a).unwrap();
    write_series_csv(&build_daily_series(&replay, &[]), &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn chunked_equals_whole_range() {
    let (start, end) = (d("2016-01-01"), d("2016-03-15"));
    let t = Arc::new(FixtureTransport::new());
    t.insert(downloads_url(DL, "p", start, end), Response::ok(downloads_body("p", start, end, &[])));
    let dir_whole = tempfile::tempdir().unwrap();
    let whole = fetch_downloads(
        &client(t.clone(), dir_whole.path(), true),
        &spec(dir_whole.path(), &["p"], "2016-01-01", "2016-03-15", 365),
        "p",
    )
    .unwrap();

    let dir_chunked = tempfile::tempdir().unwrap();
    let s = spec(dir_chunked.path(), &["p"], "2016-01-01", "2016-03-15", 30);
    for (a, b) in relqual_ingest::fetch::date_chunks(start, end, 30) {
        t.insert(downloads_url(DL, "p", a, b), Response::ok(downloads_body("p", a, b, &[])));
    }
    let chunked = fetch_downloads(&client(t.clone(), dir_chunked.path(), true), &s, "p").unwrap();
    assert_eq!(chunked, whole);
    assert_eq!(t.calls(), 1 + 3);
}

#[test]
fn missing_days_are_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &["p"], "2016-01-01", "2016-01-10", 365);
    let t = Arc::new(FixtureTransport::new());
    t.insert(
        downloads_url(DL, "p", s.start, s.end),
        Response::ok(downloads_body("p", s.start, s.end, &[d("2016-01-04")])),
    );
    let got = fetch_downloads(&client(t, dir.path(), true), &s, "p").unwrap();
    assert_eq!(got.gaps(), vec![d("2016-01-04")]);
    assert_eq!(got.counts[3], None);
}

#[test]
fn unknown_package_fails_alone() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &["good", "nope"], "2016-01-01", "2016-01-05", 365);
    let t = Arc::new(FixtureTransport::new());
    t.insert(
        downloads_url(DL, "good", s.start, s.end),
        Response::ok(downloads_body("good", s.start, s.end, &[])),
    );
    let c = client(t, dir.path(), true);
    let results = for_each_package(&s, |p| fetch_downloads(&c, &s, &p.name));
    assert_eq!(results[0].0, "good");
    assert!(results[0].1.is_ok());
    assert!(matches!(results[1].1, Err(Error::Http { status: 404, .. })));
}

fn issue_page(n: usize, prs: usize, day: &str) -> String {
    let mut items: Vec<String> = (0..n)
        .map(|k| format!("{{\"number\":{k},\"created_at\":\"{day}T10:00:00Z\",\"state\":\"closed\"}}"))
        .collect();
    items.extend((0..prs).map(|k| {
        format!("{{\"number\":{},\"created_at\":\"{day}T11:00:00Z\",\"pull_request\":{{\"url\":\"x\"}}}}", 1000 + k)
    }));
    format!("[{}]", items.join(","))
}

fn page_url(repo: &str, page: usize) -> String {
    format!("{GH}/repos/{repo}/issues?state=all&per_page=100&page={page}")
}

fn link(repo: &str, next: Option<usize>, last: usize) -> String {
    let mut parts = Vec::new();
    if let Some(n) = next {
        parts.push(format!("<{}>; rel=\"next\"", page_url(repo, n)));
    }
    parts.push(format!("<{}>; rel=\"last\"", page_url(repo, last)));
    parts.join(", ")
}

#[test]
fn paginates_to_exhaustion_and_drops_pull_requests() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &["lib=o/lib"], "2016-01-01", "2016-01-31", 365);
    let t = Arc::new(FixtureTransport::new());
    t.insert(
        issues_url(GH, "o/lib"),
        Response::ok(issue_page(100, 0, "2016-01-03")).with_header("Link", link("o/lib", Some(2), 3)),
    );
    t.insert(
        page_url("o/lib", 2),
        Response::ok(issue_page(100, 0, "2016-01-05")).with_header("Link", link("o/lib", Some(3), 3)),
    );
    t.insert(
        page_url("o/lib", 3),
        Response::ok(issue_page(37, 12, "2016-01-09")).with_header("Link", link("o/lib", None, 3)),
    );
    let c = client(t.clone(), dir.path(), true);
    let pkg: PackageSpec = "lib=o/lib".parse().unwrap();
    let dates = fetch_issues(&c, &s, &pkg).unwrap();
    assert_eq!(dates.len(), 237);
    assert_eq!(dates.iter().filter(|&&x| x == d("2016-01-09")).count(), 37);

    let mut with_prs = s.clone();
    with_prs.include_pull_requests = true;
    assert_eq!(fetch_issues(&c, &with_prs, &pkg).unwrap().len(), 249);
}

#[test]
fn empty_repo_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &["x"], "2016-01-01", "2016-01-31", 365);
    let t = Arc::new(FixtureTransport::new());
    t.insert(issues_url(GH, "o/empty"), Response::ok("[]"));
    t.insert(
        issues_url(GH, "o/cut"),
        Response::ok(issue_page(100, 0, "2016-01-03")).with_header("Link", link("o/cut", None, 4)),
    );
    let c = client(t, dir.path(), true);
    assert!(fetch_issues(&c, &s, &"e=o/empty".parse().unwrap()).unwrap().is_empty());
    assert!(matches!(
        fetch_issues(&c, &s, &"c=o/cut".parse().unwrap()),
        Err(Error::TruncatedPagination { got: 1, expected: 4, .. })
    ));
}

#[test]
fn cold_cache_without_live_mode() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &["p"], "2016-01-01", "2016-01-05", 365);
    let t = Arc::new(FixtureTransport::new());
    let err = fetch_downloads(&client(t.clone(), dir.path(), false), &s, "p").unwrap_err();
    assert!(matches!(err, Error::ColdCache { .. }));
    assert_eq!(t.calls(), 0);
}
