//! Cached GET with retries.

use std::sync::Arc;
use std::time::Duration;

use crate::cache::{Cache, CacheEntry};
use crate::error::{Error, Result};
use crate::transport::{Response, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(300),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff for a zero-based attempt.
    pub fn backoff(&self, attempt: usize) -> Duration {
        let factor = 1u32 << attempt.min(20);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Serves requests from the cache, going to the transport only when live
/// fetching is enabled and the URL is not cached.
pub struct Client {
    transport: Arc<dyn Transport>,
    cache: Cache,
    live: bool,
    retry: RetryPolicy,
    sleeper: Sleeper,
    token: Option<String>,
}

impl Client {
    pub fn new(transport: Arc<dyn Transport>, cache: Cache, live: bool) -> Self {
        Client {
            transport,
            cache,
            live,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(std::thread::sleep),
            token: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Token sent as an `Authorization` header. Never part of cache keys.
    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn get(&self, url: &str) -> Result<CacheEntry> {
        if let Some(e) = self.cache.get(url)? {
            return Ok(e);
        }
        if !self.live {
            return Err(Error::ColdCache { url: url.to_string() });
        }
        let mut headers = vec![("Accept".to_string(), "application/json".to_string())];
        if let Some(t) = &self.token {
            headers.push(("Authorization".to_string(), format!("token {t}")));
        }
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 0..attempts {
            let last = attempt + 1 == attempts;
            let resp = match self.transport.get(url, &headers) {
                Ok(r) => r,
                Err(message) if last => {
                    return Err(Error::Transport {
                        url: url.to_string(),
                        message,
                    })
                }
                Err(message) => {
                    log::warn!("{url}: {message}; retrying");
                    (self.sleeper)(self.retry.backoff(attempt));
                    continue;
                }
            };
            match resp.status {
                200..=299 => return self.cache.put(url, resp.body.as_bytes(), resp.header("link")),
                s if is_rate_limited(&resp) => {
                    if last {
                        return Err(Error::RateLimited {
                            url: url.to_string(),
                            attempts,
                        });
                    }
                    let wait = server_wait(&resp).unwrap_or_else(|| self.retry.backoff(attempt));
                    log::warn!("{url}: HTTP {s}, waiting {wait:?}");
                    (self.sleeper)(wait.min(self.retry.max_delay));
                }
                s @ 500..=599 if !last => {
                    log::warn!("{url}: HTTP {s}; retrying");
                    (self.sleeper)(self.retry.backoff(attempt));
                }
                s => {
                    return Err(Error::Http {
                        status: s,
                        url: url.to_string(),
                    })
                }
            }
        }
        unreachable!("the last attempt always returns")
    }
}

fn is_rate_limited(r: &Response) -> bool {
    r.status == 429 || (r.status == 403 && r.header("x-ratelimit-remaining") == Some("0"))
}

/// Wait requested by the server through `Retry-After` (seconds) or
/// `X-RateLimit-Reset` (epoch seconds).
fn server_wait(r: &Response) -> Option<Duration> {
    if let Some(s) = r.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Some(Duration::from_secs(s));
    }
    let reset = r.header("x-ratelimit-reset")?.trim().parse::<i64>().ok()?;
    let now = chrono::Utc::now().timestamp();
    Some(Duration::from_secs((reset - now).max(1) as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::FixtureTransport;
    use std::sync::Mutex;

    fn setup(live: bool) -> (Arc<FixtureTransport>, Client, Arc<Mutex<Vec<Duration>>>, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let t = Arc::new(FixtureTransport::new());
        let slept = Arc::new(Mutex::new(Vec::new()));
        let s2 = slept.clone();
        let c = Client::new(t.clone(), Cache::open(dir.path()).unwrap(), live)
            .with_sleeper(Arc::new(move |d| s2.lock().unwrap().push(d)));
        (t, c, slept, dir)
    }

    #[test]
    fn honors_retry_after_then_caches() {
        let (t, c, slept, _d) = setup(true);
        t.insert_sequence(
            "u",
            vec![Response::status(429).with_header("Retry-After", "7"), Response::ok("body")],
        );
        assert_eq!(c.get("u").unwrap().body, b"body");
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_secs(7)]);
        assert_eq!(c.get("u").unwrap().body, b"body");
        assert_eq!(t.calls(), 2);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let (t, c, slept, _d) = setup(true);
        t.insert("u", Response::status(429));
        assert!(matches!(c.get("u"), Err(Error::RateLimited { attempts: 5, .. })));
        assert_eq!(t.calls(), 5);
        let waits = slept.lock().unwrap().clone();
        assert_eq!(waits, (0..4).map(|k| Duration::from_secs(1 << k)).collect::<Vec<_>>());
    }

    #[test]
    fn server_errors_retry_client_errors_do_not() {
        let (t, c, _, _d) = setup(true);
        t.insert_sequence("a", vec![Response::status(502), Response::ok("x")]);
        assert_eq!(c.get("a").unwrap().body, b"x");
        assert!(matches!(c.get("missing"), Err(Error::Http { status: 404, .. })));
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn cold_cache_offline() {
        let (t, c, _, _d) = setup(false);
        t.insert("u", Response::ok("x"));
        let err = c.get("u").unwrap_err();
        assert!(matches!(err, Error::ColdCache { .. }));
        assert!(err.to_string().contains("--live"));
        assert_eq!(t.calls(), 0);
    }
}
