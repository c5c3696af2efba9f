//! Usage-record CSV files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use relqual_core::quality::{UsageRecord, USAGE_HEADER};
use relqual_core::Error as CoreError;

use crate::error::Result;

fn field<T: FromStr>(rec: &csv::StringRecord, k: usize, line: usize) -> std::result::Result<T, CoreError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(k).unwrap_or("").trim();
    raw.parse().map_err(|e| CoreError::Parse {
        line,
        message: format!("{} {raw:?}: {e}", USAGE_HEADER[k]),
    })
}

/// Read usage records. Line numbers in errors count the header as line 1.
pub fn read_usage_csv<R: Read>(reader: R) -> Result<Vec<UsageRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != USAGE_HEADER {
        return Err(CoreError::SchemaMismatch {
            expected: USAGE_HEADER.iter().map(|s| s.to_string()).collect(),
            found: header,
        }
        .into());
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != USAGE_HEADER.len() {
            return Err(CoreError::Parse {
                line,
                message: format!("{} fields, expected {}", rec.len(), USAGE_HEADER.len()),
            }
            .into());
        }
        let time_on_site: f64 = field(&rec, 6, line)?;
        if !(time_on_site.is_finite() && time_on_site >= 0.0) {
            return Err(CoreError::Parse {
                line,
                message: format!("time_on_site must be a nonnegative number, got {time_on_site}"),
            }
            .into());
        }
        out.push(UsageRecord {
            date: field::<NaiveDate>(&rec, 0, line)?,
            release: rec.get(1).unwrap_or("").trim().to_string(),
            new_users: field(&rec, 2, line)?,
            users: field(&rec, 3, line)?,
            new_visits: field(&rec, 4, line)?,
            visits: field(&rec, 5, line)?,
            time_on_site,
            exceptions: field(&rec, 7, line)?,
        });
    }
    Ok(out)
}

pub fn load_usage_csv(path: &Path) -> Result<Vec<UsageRecord>> {
    read_usage_csv(File::open(path)?)
}

pub fn write_usage_csv<W: Write>(records: &[UsageRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(USAGE_HEADER)?;
    for r in records {
        w.write_record([
            r.date.to_string(),
            r.release.clone(),
            r.new_users.to_string(),
            r.users.to_string(),
            r.new_visits.to_string(),
            r.visits.to_string(),
            r.time_on_site.to_string(),
            r.exceptions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
