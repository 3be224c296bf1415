//! Polite fetching.
//!
//! [`Fetcher`] wraps a [`Transport`] with blacklist filtering, robots.txt
//! compliance (fetched and cached per origin before the first page request),
//! per-domain request spacing, bounded retries and manual redirect handling
//! that re-checks every hop. Time comes from a [`Clock`] so politeness can be
//! verified without sleeping.

#![allow(clippy::result_large_err)]

pub mod blacklist;
pub mod robots;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{domain_of, CanonicalUrl, Domain};
use crate::config::{CrawlConfig, MAX_RETRIES_LIMIT};
pub use blacklist::{filter_blacklist, Blacklist};
pub use robots::{allowed_by_robots, Robots};

/// robots.txt files are read up to this size regardless of the page cap.
pub const ROBOTS_MAX_BYTES: usize = 500 * 1024;

pub const MAX_REDIRECTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Failed(String),
}

/// Raw HTTP response. Transports must not follow redirects themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub status: u16,
    pub location: Option<String>,
    pub content_type: String,
    pub body: Vec<u8>,
    pub truncated: bool,
}

/// A single HTTP GET. Implementations must be safe for concurrent use.
pub trait Transport: Send + Sync {
    fn get(
        &self,
        url: &CanonicalUrl,
        user_agent: &str,
        timeout: Duration,
        max_body_bytes: usize,
    ) -> Result<RawResponse, TransportError>;
}

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_until(&self, deadline_ms: u64);

    /// Rewinds or advances to a checkpointed time. Wall clocks ignore this.
    fn restore(&self, _ms: u64) {}
}

/// Wall-clock time in milliseconds since the Unix epoch.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }

    fn sleep_until(&self, deadline_ms: u64) {
        let now = self.now_ms();
        if deadline_ms > now {
            std::thread::sleep(Duration::from_millis(deadline_ms - now));
        }
    }
}

/// Logical clock: sleeping jumps time forward instantly.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn starting_at(ms: u64) -> VirtualClock {
        VirtualClock { now: AtomicU64::new(ms) }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.now.store(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline_ms: u64) {
        self.now.fetch_max(deadline_ms, Ordering::SeqCst);
    }

    fn restore(&self, ms: u64) {
        self.set(ms);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchPolicy {
    pub user_agent: String,
    pub politeness_delay_ms: u64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_body_bytes: usize,
}

impl FetchPolicy {
    pub fn from_config(cfg: &CrawlConfig) -> FetchPolicy {
        FetchPolicy {
            user_agent: cfg.user_agent.clone(),
            politeness_delay_ms: cfg.politeness_delay_ms,
            timeout_ms: cfg.timeout_ms,
            max_retries: cfg.max_retries.min(MAX_RETRIES_LIMIT),
            max_body_bytes: cfg.max_body_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    /// Final URL after redirects.
    pub url: CanonicalUrl,
    pub status: u16,
    pub body: Vec<u8>,
    pub content_type: String,
    pub elapsed_ms: u64,
    /// Body was cut at `max_body_bytes`.
    pub truncated: bool,
}

impl FetchResult {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn is_html_like(&self) -> bool {
        let ct = self.content_type.to_ascii_lowercase();
        ct.is_empty() || ct.contains("html") || ct.starts_with("text/")
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("{0} is blacklisted")]
    Blacklisted(CanonicalUrl),
    #[error("{0} is disallowed by robots.txt")]
    RobotsDenied(CanonicalUrl),
    #[error("{0} timed out")]
    Timeout(CanonicalUrl),
    #[error("{0} redirected more than {MAX_REDIRECTS} times")]
    TooManyRedirects(CanonicalUrl),
    #[error("{0}: {1}")]
    TransportError(CanonicalUrl, String),
}

/// Robots cache and per-domain request times, persisted across resumes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetcherSnapshot {
    pub robots: BTreeMap<String, Robots>,
    pub last_request_ms: BTreeMap<Domain, u64>,
}

pub struct Fetcher {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    policy: FetchPolicy,
    blacklist: Blacklist,
    state: Mutex<FetcherSnapshot>,
}

impl Fetcher {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>, policy: FetchPolicy, blacklist: Blacklist) -> Fetcher {
        Fetcher { transport, clock, policy, blacklist, state: Mutex::new(FetcherSnapshot::default()) }
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    pub fn blacklist(&self) -> &Blacklist {
        &self.blacklist
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn snapshot(&self) -> FetcherSnapshot {
        self.state.lock().expect("fetcher state poisoned").clone()
    }

    pub fn restore(&self, snapshot: FetcherSnapshot) {
        *self.state.lock().expect("fetcher state poisoned") = snapshot;
    }

    /// Whether `url` passes the blacklist and (possibly cached) robots rules.
    pub fn permitted(&self, url: &CanonicalUrl) -> Result<(), FetchError> {
        if self.blacklist.blocks(url) {
            return Err(FetchError::Blacklisted(url.clone()));
        }
        let robots = self.robots_for(url);
        if !robots.is_allowed(url.path_and_query(), &self.policy.user_agent) {
            return Err(FetchError::RobotsDenied(url.clone()));
        }
        Ok(())
    }

    pub fn fetch(&self, url: &CanonicalUrl) -> Result<FetchResult, FetchError> {
        let started = self.clock.now_ms();
        let mut current = url.clone();
        let mut redirects = 0;
        loop {
            self.permitted(&current)?;
            let resp = self.get_with_retries(&current)?;
            if is_redirect(resp.status) {
                if let Some(location) = resp.location.as_deref() {
                    redirects += 1;
                    if redirects > MAX_REDIRECTS {
                        return Err(FetchError::TooManyRedirects(url.clone()));
                    }
                    current = current
                        .join(location)
                        .map_err(|e| FetchError::TransportError(current.clone(), format!("bad redirect: {e}")))?;
                    continue;
                }
            }
            return Ok(FetchResult {
                url: current,
                status: resp.status,
                body: resp.body,
                content_type: resp.content_type,
                elapsed_ms: self.clock.now_ms().saturating_sub(started),
                truncated: resp.truncated,
            });
        }
    }

    fn get_with_retries(&self, url: &CanonicalUrl) -> Result<RawResponse, FetchError> {
        let attempts = self.policy.max_retries.min(MAX_RETRIES_LIMIT) + 1;
        let mut last_err = None;
        for attempt in 0..attempts {
            self.wait_turn(&domain_of(url));
            match self.raw_get(url, self.policy.max_body_bytes) {
                Ok(resp) if resp.status >= 500 && attempt + 1 < attempts => {
                    last_err = Some(FetchError::TransportError(url.clone(), format!("status {}", resp.status)));
                }
                Ok(resp) => return Ok(resp),
                Err(TransportError::Timeout) => last_err = Some(FetchError::Timeout(url.clone())),
                Err(TransportError::Failed(msg)) => last_err = Some(FetchError::TransportError(url.clone(), msg)),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn raw_get(&self, url: &CanonicalUrl, cap: usize) -> Result<RawResponse, TransportError> {
        let mut resp =
            self.transport.get(url, &self.policy.user_agent, Duration::from_millis(self.policy.timeout_ms), cap)?;
        if resp.body.len() > cap {
            resp.body.truncate(cap);
            resp.truncated = true;
        }
        Ok(resp)
    }

    /// Reserves the next request slot for `domain` and waits for it.
    fn wait_turn(&self, domain: &Domain) {
        let slot = {
            let mut state = self.state.lock().expect("fetcher state poisoned");
            let now = self.clock.now_ms();
            let slot = match state.last_request_ms.get(domain) {
                Some(last) => now.max(last + self.policy.politeness_delay_ms),
                None => now,
            };
            state.last_request_ms.insert(domain.clone(), slot);
            slot
        };
        self.clock.sleep_until(slot);
    }

    fn robots_for(&self, url: &CanonicalUrl) -> Robots {
        let origin = url.origin().to_string();
        if let Some(r) = self.state.lock().expect("fetcher state poisoned").robots.get(&origin) {
            return r.clone();
        }
        let robots = self.fetch_robots(url);
        self.state.lock().expect("fetcher state poisoned").robots.insert(origin, robots.clone());
        robots
    }

    /// 2xx: parsed; 4xx or unreachable: no restrictions; 5xx: everything
    /// disallowed for this run.
    fn fetch_robots(&self, url: &CanonicalUrl) -> Robots {
        let mut target = match url.join("/robots.txt") {
            Ok(t) => t,
            Err(_) => return Robots::allow_all(),
        };
        for _ in 0..=MAX_REDIRECTS {
            if self.blacklist.blocks(&target) {
                return Robots::allow_all();
            }
            self.wait_turn(&domain_of(&target));
            let resp = match self.raw_get(&target, ROBOTS_MAX_BYTES) {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("robots.txt for {} unreachable: {e}", url.origin());
                    return Robots::allow_all();
                }
            };
            match resp.status {
                200..=299 => return Robots::parse(&String::from_utf8_lossy(&resp.body)),
                s if is_redirect(s) => match resp.location.as_deref().map(|l| target.join(l)) {
                    Some(Ok(next)) => target = next,
                    _ => return Robots::allow_all(),
                },
                500..=599 => return Robots::disallow_all(),
                _ => return Robots::allow_all(),
            }
        }
        Robots::allow_all()
    }
}

fn is_redirect(status: u16) -> bool {
    matches!(status, 301 | 302 | 303 | 307 | 308)
}
