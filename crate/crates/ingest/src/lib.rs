//! Data acquisition: usage CSV files, daily package downloads, issue
//! creation dates, and a response cache that makes every fetch replayable
//! offline.

pub mod cache;
pub mod client;
pub mod error;
pub mod fetch;
pub mod series;
pub mod transport;
pub mod usage;

pub use cache::{Cache, CacheEntry};
pub use client::{Client, RetryPolicy};
pub use error::{Error, Result};
pub use fetch::{
    fetch_downloads, fetch_issues, filter_popular, for_each_package, DownloadSeries, FetchSpec, PackageSpec,
};
pub use series::{build_daily_series, read_series_csv, write_series_csv};
pub use transport::{FixtureTransport, LiveTransport, OfflineTransport, Response, Transport};
pub use usage::{load_usage_csv, read_usage_csv, write_usage_csv};
