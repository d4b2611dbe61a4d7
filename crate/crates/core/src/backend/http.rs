//! Blocking JSON client with retries, backoff and request spacing.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{BackendError, RetryPolicy, StatsCounter};

/// Enforces a minimum interval between request starts.
#[derive(Debug)]
pub(crate) struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        Self { interval, next: Mutex::new(None) }
    }

    pub fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
        let now = Instant::now();
        let start = match *next {
            Some(t) if t > now => {
                thread::sleep(t - now);
                t
            }
            _ => now,
        };
        *next = Some(start + self.interval);
    }
}

#[derive(Debug)]
pub(crate) struct HttpClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
    limiter: RateLimiter,
    pub stats: StatsCounter,
}

enum Attempt<R> {
    Done(R),
    Retry { error: BackendError, after: Option<Duration> },
}

impl HttpClient {
    pub fn new(timeout: Duration, retry: RetryPolicy, min_interval: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { agent, retry, limiter: RateLimiter::new(min_interval), stats: StatsCounter::default() }
    }

    /// Single GET without retries, used for health checks.
    pub fn get_ok(&self, url: &str) -> Result<String, BackendError> {
        let conn = |e: ureq::Error| BackendError::Connectivity { url: url.to_owned(), message: e.to_string() };
        let mut resp = self.agent.get(url).call().map_err(conn)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        if status == 200 {
            Ok(body)
        } else {
            Err(BackendError::Connectivity { url: url.to_owned(), message: format!("HTTP {status}: {body}") })
        }
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &B,
    ) -> Result<R, BackendError> {
        let mut attempt = 0;
        loop {
            self.limiter.wait();
            self.stats.request();
            let (error, after) = match self.attempt(url, bearer, body)? {
                Attempt::Done(r) => return Ok(r),
                Attempt::Retry { error, after } => (error, after),
            };
            if attempt >= self.retry.max_retries {
                return Err(match error {
                    BackendError::RateLimited { .. } => BackendError::RateLimited { retries: attempt },
                    BackendError::Transport { message, .. } => BackendError::Transport { message, retries: attempt },
                    other => other,
                });
            }
            let backoff = Duration::from_millis(self.retry.backoff_ms(attempt));
            let wait = after.map_or(backoff, |a| a.min(Duration::from_millis(self.retry.max_backoff_ms)));
            log::warn!("{url}: {error}; retrying in {wait:?}");
            self.stats.retry(matches!(error, BackendError::RateLimited { .. }));
            thread::sleep(wait);
            attempt += 1;
        }
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &B,
    ) -> Result<Attempt<R>, BackendError> {
        let mut req = self.agent.post(url);
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Ok(Attempt::Retry {
                    error: BackendError::Transport { message: e.to_string(), retries: 0 },
                    after: None,
                })
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport { message: e.to_string(), retries: 0 });
        match status {
            200..=299 => {
                let text = text?;
                serde_json::from_str(&text)
                    .map(Attempt::Done)
                    .map_err(|e| BackendError::Malformed(format!("{e}: {}", truncate(&text))))
            }
            401 | 403 => Err(BackendError::Auth(format!("HTTP {status} from {url}"))),
            429 => Ok(Attempt::Retry { error: BackendError::RateLimited { retries: 0 }, after: retry_after }),
            500..=599 => Ok(Attempt::Retry {
                error: BackendError::Transport {
                    message: format!("HTTP {status}: {}", truncate(&text.unwrap_or_default())),
                    retries: 0,
                },
                after: retry_after,
            }),
            _ => Err(BackendError::Http { status, body: truncate(&text.unwrap_or_default()) }),
        }
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 300;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_owned(),
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}
