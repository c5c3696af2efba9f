//! Daily series assembly and CSV files.

use std::io::{Read, Write};

use chrono::NaiveDate;
use relqual_core::quality::DailySeries;
use relqual_core::Error as CoreError;

use crate::error::Result;
use crate::fetch::DownloadSeries;

pub const SERIES_HEADER: [&str; 4] = ["date", "downloads", "new_issues", "cumulative_issues"];

/// Join downloads with issue creation dates: each day's cumulative count is
/// the number of issues created on or before it.
pub fn build_daily_series(downloads: &DownloadSeries, issue_dates: &[NaiveDate]) -> DailySeries {
    let mut sorted = issue_dates.to_vec();
    sorted.sort();
    let count_through = |day: NaiveDate| sorted.partition_point(|&d| d <= day) as u64;
    let cumulative = (0..downloads.counts.len())
        .map(|i| count_through(downloads.start + chrono::Days::new(i as u64)))
        .collect();
    let prior = sorted.partition_point(|&d| d < downloads.start) as u64;
    DailySeries {
        package: downloads.package.clone(),
        start: downloads.start,
        downloads: downloads.counts.clone(),
        cumulative_issues: cumulative,
        prior_issues: prior,
    }
}

pub fn write_series_csv<W: Write>(series: &DailySeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SERIES_HEADER)?;
    let (new, _) = series.new_issues();
    for i in 0..series.len() {
        w.write_record([
            series.date(i).to_string(),
            series.downloads[i].map(|d| d.to_string()).unwrap_or_default(),
            new[i].to_string(),
            series.cumulative_issues[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a series written by [`write_series_csv`]. Dates must be consecutive.
pub fn read_series_csv<R: Read>(reader: R, package: &str) -> Result<DailySeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != SERIES_HEADER {
        return Err(CoreError::SchemaMismatch {
            expected: SERIES_HEADER.iter().map(|s| s.to_string()).collect(),
            found: header,
        }
        .into());
    }
    let mut start = None;
    let mut downloads = Vec::new();
    let mut cumulative = Vec::new();
    let mut first_new = 0u64;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let bad = |m: String| CoreError::Parse { line, message: m };
        let date: NaiveDate = rec[0].trim().parse().map_err(|e| bad(format!("date: {e}")))?;
        let expected = start.map(|s: NaiveDate| s + chrono::Days::new(k as u64));
        match expected {
            None => start = Some(date),
            Some(e) if e != date => return Err(bad(format!("expected {e}, found {date}")).into()),
            _ => {}
        }
        let dl = rec[1].trim();
        downloads.push(if dl.is_empty() {
            None
        } else {
            Some(dl.parse().map_err(|e| bad(format!("downloads: {e}")))?)
        });
        let new: u64 = rec[2].trim().parse().map_err(|e| bad(format!("new_issues: {e}")))?;
        let cum: u64 = rec[3].trim().parse().map_err(|e| bad(format!("cumulative_issues: {e}")))?;
        if k == 0 {
            first_new = new;
        }
        cumulative.push(cum);
    }
    let start = start.ok_or_else(|| CoreError::InsufficientData("series has no rows".into()))?;
    let prior = cumulative[0].saturating_sub(first_new);
    Ok(DailySeries::new(package, start, downloads, cumulative, prior)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn dl(start: &str, n: usize) -> DownloadSeries {
        DownloadSeries {
            package: "p".into(),
            start: d(start),
            counts: vec![Some(5); n],
        }
    }

    #[test]
    fn counting_example() {
        let s = build_daily_series(&dl("2016-03-01", 6), &[d("2016-03-02"), d("2016-03-02"), d("2016-03-05")]);
        assert_eq!(s.cumulative_issues, vec![0, 2, 2, 2, 3, 3]);
        assert_eq!(s.prior_issues, 0);
        let none = build_daily_series(&dl("2016-03-01", 4), &[]);
        assert_eq!(none.cumulative_issues, vec![0; 4]);
    }

    #[test]
    fn csv_round_trip_keeps_prior_and_gaps() {
        let mut series = build_daily_series(&dl("2016-03-01", 5), &[d("2016-02-01"), d("2016-03-03")]);
        series.downloads[1] = None;
        let mut buf = Vec::new();
        write_series_csv(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("date,downloads,new_issues,cumulative_issues\n2016-03-01,5,0,1\n2016-03-02,,0,1\n"));
        assert_eq!(read_series_csv(buf.as_slice(), "p").unwrap(), series);
    }

    proptest! {
        #[test]
        fn cumulative_matches_filter_count(
            offsets in proptest::collection::vec(-20i64..60, 0..40),
            n in 1usize..50,
        ) {
            let start = d("2017-06-01");
            let dates: Vec<NaiveDate> = offsets
                .iter()
                .map(|&o| start.checked_add_signed(chrono::Duration::days(o)).unwrap())
                .collect();
            let s = build_daily_series(&dl("2017-06-01", n), &dates);
            for i in 0..n {
                let day = start + chrono::Days::new(i as u64);
                prop_assert_eq!(s.cumulative_issues[i], dates.iter().filter(|&&c| c <= day).count() as u64);
            }
            prop_assert!(s.cumulative_issues.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
