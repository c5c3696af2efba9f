//! HTTP access behind a trait so tests and offline runs use recorded
//! responses.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub status: u16,
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Response {
    pub fn ok(body: impl Into<String>) -> Self {
        Response {
            status: 200,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn status(status: u16) -> Self {
        Response {
            status,
            headers: Vec::new(),
            body: String::new(),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_string(), value.into()));
        self
    }

    /// Case-insensitive header lookup.
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub trait Transport: Send + Sync {
    /// One GET request. `Err` is a connection-level failure.
    fn get(&self, url: &str, headers: &[(String, String)]) -> std::result::Result<Response, String>;
}

/// Network transport.
pub struct LiveTransport {
    agent: ureq::Agent,
}

impl LiveTransport {
    pub fn new(timeout: Duration) -> Self {
        LiveTransport {
            agent: ureq::AgentBuilder::new()
                .timeout(timeout)
                .user_agent(concat!("relqual/", env!("CARGO_PKG_VERSION")))
                .build(),
        }
    }
}

impl Default for LiveTransport {
    fn default() -> Self {
        LiveTransport::new(Duration::from_secs(60))
    }
}

impl Transport for LiveTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> std::result::Result<Response, String> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.set(k, v);
        }
        let resp = match req.call() {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(e.to_string()),
        };
        let status = resp.status();
        let headers = resp
            .headers_names()
            .into_iter()
            .filter_map(|k| resp.header(&k).map(|v| (k.clone(), v.to_string())))
            .collect();
        let body = resp.into_string().map_err(|e| e.to_string())?;
        Ok(Response { status, headers, body })
    }
}

/// Recorded responses keyed by URL. Unknown URLs answer 404. A URL given a
/// sequence answers with each response in turn, repeating the last.
#[derive(Default)]
pub struct FixtureTransport {
    responses: Mutex<HashMap<String, VecDeque<Response>>>,
    calls: AtomicUsize,
}

impl FixtureTransport {
    pub fn new() -> Self {
        FixtureTransport::default()
    }

    pub fn insert(&self, url: impl Into<String>, response: Response) {
        self.insert_sequence(url, vec![response]);
    }

    pub fn insert_sequence(&self, url: impl Into<String>, responses: Vec<Response>) {
        self.responses
            .lock()
            .expect("fixture lock")
            .insert(url.into(), responses.into());
    }

    /// Load a JSON object mapping URL to response.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let map: HashMap<String, Response> = serde_json::from_slice(&std::fs::read(path)?)?;
        let t = FixtureTransport::new();
        for (url, r) in map {
            t.insert(url, r);
        }
        Ok(t)
    }

    /// Requests served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str, _headers: &[(String, String)]) -> std::result::Result<Response, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut map = self.responses.lock().expect("fixture lock");
        match map.get_mut(url) {
            Some(q) if q.len() > 1 => Ok(q.pop_front().expect("nonempty")),
            Some(q) => Ok(q.front().cloned().expect("nonempty")),
            None => Ok(Response::status(404)),
        }
    }
}

/// Transport that refuses every request.
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn get(&self, url: &str, _headers: &[(String, String)]) -> std::result::Result<Response, String> {
        Err(format!("network access disabled for {url}"))
    }
}
