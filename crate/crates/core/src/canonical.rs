//! Canonical page identity.
//!
//! Every page the crawler touches is keyed by a [`CanonicalUrl`]: http(s)
//! only, lowercase host, default port elided, no userinfo, no fragment, and
//! `utm_*` tracking parameters removed. Two canonical URLs are equal exactly
//! when their serialized forms are byte-identical.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UrlError {
    #[error("unsupported scheme `{0}`")]
    UnsupportedScheme(String),
    #[error("malformed url `{0}`: {1}")]
    MalformedUrl(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Http,
    Https,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Http => "http",
            Scheme::Https => "https",
        }
    }
}

/// A normalized http(s) URL. Construct with [`normalize_url`] or `parse`.
#[derive(Clone)]
pub struct CanonicalUrl {
    scheme: Scheme,
    host: String,
    port: Option<u16>,
    path: String,
    query: Vec<(String, Option<String>)>,
    serialized: String,
}

impl CanonicalUrl {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn port(&self) -> Option<u16> {
        self.port
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Query pairs in document order. A bare key (`?flag`) has no value.
    pub fn query(&self) -> &[(String, Option<String>)] {
        &self.query
    }

    pub fn as_str(&self) -> &str {
        &self.serialized
    }

    /// Path plus query, as matched by robots.txt rules.
    pub fn path_and_query(&self) -> &str {
        let start = self.origin_len();
        &self.serialized[start..]
    }

    /// `scheme://host[:port]`
    pub fn origin(&self) -> &str {
        &self.serialized[..self.origin_len()]
    }

    fn origin_len(&self) -> usize {
        let mut len = self.scheme.as_str().len() + 3 + self.host.len();
        if let Some(port) = self.port {
            len += 1 + port.to_string().len();
        }
        len
    }

    /// Same page with a different scheme; used for redirect bookkeeping.
    pub fn with_scheme(&self, scheme: Scheme) -> CanonicalUrl {
        let mut port = self.port;
        if matches!((scheme, port), (Scheme::Http, Some(80)) | (Scheme::Https, Some(443))) {
            port = None;
        }
        assemble(scheme, self.host.clone(), port, self.path.clone(), self.query.clone())
    }

    pub fn join(&self, reference: &str) -> Result<CanonicalUrl, UrlError> {
        normalize_url(reference, Some(self))
    }
}

impl PartialEq for CanonicalUrl {
    fn eq(&self, other: &Self) -> bool {
        self.serialized == other.serialized
    }
}

impl Eq for CanonicalUrl {}

impl Hash for CanonicalUrl {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.serialized.hash(state);
    }
}

impl PartialOrd for CanonicalUrl {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CanonicalUrl {
    fn cmp(&self, other: &Self) -> Ordering {
        self.serialized.cmp(&other.serialized)
    }
}

impl fmt::Display for CanonicalUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialized)
    }
}

impl fmt::Debug for CanonicalUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalUrl({})", self.serialized)
    }
}

impl FromStr for CanonicalUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_url(s, None)
    }
}

impl Serialize for CanonicalUrl {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.serialized)
    }
}

impl<'de> Deserialize<'de> for CanonicalUrl {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        normalize_url(&raw, None).map_err(serde::de::Error::custom)
    }
}

/// Canonicalizes `raw`, resolving it against `base` when it is relative.
pub fn normalize_url(raw: &str, base: Option<&CanonicalUrl>) -> Result<CanonicalUrl, UrlError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(UrlError::MalformedUrl(raw.to_string(), "empty".into()));
    }
    let malformed = |e: &dyn fmt::Display| UrlError::MalformedUrl(raw.to_string(), e.to_string());

    let parsed = match url::Url::parse(trimmed) {
        Ok(u) => u,
        Err(url::ParseError::RelativeUrlWithoutBase) => {
            let base = base.ok_or_else(|| malformed(&"relative reference without base"))?;
            let base = url::Url::parse(base.as_str()).map_err(|e| malformed(&e))?;
            base.join(trimmed).map_err(|e| malformed(&e))?
        }
        Err(e) => return Err(malformed(&e)),
    };

    let scheme = match parsed.scheme() {
        "http" => Scheme::Http,
        "https" => Scheme::Https,
        other => return Err(UrlError::UnsupportedScheme(other.to_string())),
    };
    let host = match parsed.host() {
        Some(url::Host::Domain(d)) => d.to_ascii_lowercase(),
        Some(url::Host::Ipv4(ip)) => ip.to_string(),
        Some(url::Host::Ipv6(ip)) => format!("[{ip}]"),
        None => return Err(malformed(&"missing host")),
    };
    if host.is_empty() {
        return Err(malformed(&"missing host"));
    }
    let path = match parsed.path() {
        "" => "/".to_string(),
        p => p.to_string(),
    };
    let query = parsed.query().map(parse_query).unwrap_or_default();

    Ok(assemble(scheme, host, parsed.port(), path, query))
}

fn parse_query(raw: &str) -> Vec<(String, Option<String>)> {
    raw.split('&')
        .filter(|pair| !pair.is_empty())
        .map(|pair| match pair.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (pair.to_string(), None),
        })
        .filter(|(k, _)| !k.to_ascii_lowercase().starts_with("utm_"))
        .collect()
}

fn assemble(
    scheme: Scheme,
    host: String,
    port: Option<u16>,
    path: String,
    query: Vec<(String, Option<String>)>,
) -> CanonicalUrl {
    let mut serialized = format!("{}://{}", scheme.as_str(), host);
    if let Some(port) = port {
        serialized.push(':');
        serialized.push_str(&port.to_string());
    }
    serialized.push_str(&path);
    for (i, (k, v)) in query.iter().enumerate() {
        serialized.push(if i == 0 { '?' } else { '&' });
        serialized.push_str(k);
        if let Some(v) = v {
            serialized.push('=');
            serialized.push_str(v);
        }
    }
    CanonicalUrl { scheme, host, port, path, query, serialized }
}

/// Registrable domain: the unit of domain counting in rewards and reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Domain(String);

impl Domain {
    /// Builds a domain from a name as written in a blacklist or config.
    pub fn new(name: &str) -> Option<Domain> {
        let name = name.trim().trim_end_matches('.').to_ascii_lowercase();
        (!name.is_empty()).then_some(Domain(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Registrable domain of `url` using the bundled public-suffix list.
///
/// IP-literal hosts come back verbatim. Hosts the list cannot place fall
/// back to their last two labels.
pub fn domain_of(url: &CanonicalUrl) -> Domain {
    registrable_domain(url.host())
}

pub(crate) fn registrable_domain(host: &str) -> Domain {
    let bare = host.trim_start_matches('[').trim_end_matches(']');
    if bare.parse::<IpAddr>().is_ok() {
        return Domain(host.to_string());
    }
    match psl::domain_str(host) {
        Some(d) => Domain(d.to_string()),
        None => Domain(last_two_labels(host).to_string()),
    }
}

/// Fallback registrable-domain rule used when no suffix data applies.
pub fn last_two_labels(host: &str) -> &str {
    let mut dots = host.rmatch_indices('.');
    dots.next();
    match dots.next() {
        Some((idx, _)) => &host[idx + 1..],
        None => host,
    }
}
