//! Content-addressed response cache with a JSON index.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

const INDEX: &str = "index.json";

/// Key of a request: SHA-256 of its URL, hex encoded.
pub fn cache_key(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    url: String,
    file: String,
    fetched_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    link: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: String,
    pub url: String,
    /// RFC 3339 time of the fetch.
    pub fetched_at: String,
    /// Pagination `Link` header of the response, when present.
    pub link: Option<String>,
    pub body: Vec<u8>,
}

/// Entries are never overwritten or evicted. Files are written to a
/// temporary name and renamed into place.
pub struct Cache {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, IndexEntry>>,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(INDEX);
        let index = if path.exists() {
            serde_json::from_slice(&std::fs::read(&path)?)?
        } else {
            BTreeMap::new()
        };
        Ok(Cache {
            dir: dir.to_path_buf(),
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, url: &str) -> Result<Option<CacheEntry>> {
        let key = cache_key(url);
        let entry = self.index.lock().expect("cache lock").get(&key).cloned();
        let Some(e) = entry else {
            return Ok(None);
        };
        let body = std::fs::read(self.dir.join(&e.file))?;
        Ok(Some(CacheEntry {
            key,
            url: e.url,
            fetched_at: e.fetched_at,
            link: e.link,
            body,
        }))
    }

    /// Store a response; an existing entry for the URL is kept and returned.
    pub fn put(&self, url: &str, body: &[u8], link: Option<&str>) -> Result<CacheEntry> {
        if let Some(e) = self.get(url)? {
            return Ok(e);
        }
        let key = cache_key(url);
        let file = format!("{key}.body");
        self.write_atomic(&file, body)?;
        let entry = IndexEntry {
            url: url.to_string(),
            file,
            fetched_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            link: link.map(str::to_string),
        };
        let mut index = self.index.lock().expect("cache lock");
        let entry = index.entry(key.clone()).or_insert(entry).clone();
        let json = serde_json::to_vec_pretty(&*index)?;
        self.write_atomic(INDEX, &json)?;
        Ok(CacheEntry {
            key,
            url: entry.url,
            fetched_at: entry.fetched_at,
            link: entry.link,
            body: body.to_vec(),
        })
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        Ok(())
    }
}
