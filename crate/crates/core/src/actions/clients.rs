//! Backlink and search service abstractions, plus a fixture-file client.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::canonical::CanonicalUrl;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("service unavailable: {0}")]
    Unavailable(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("no client configured for this action")]
    NotConfigured,
}

/// Pages linking to a URL. Must return at most `cap` results.
pub trait BacklinkClient: Send + Sync {
    fn backlinks(&self, url: &CanonicalUrl, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError>;
}

/// Web search. Must return at most `cap` results, best first.
pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError>;
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    #[serde(default)]
    backlinks: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    search: BTreeMap<String, Vec<String>>,
}

/// Answers from a JSON document
/// `{"backlinks": {url: [url, ...]}, "search": {query: [url, ...]}}`.
/// Unknown keys answer with an empty list; malformed result URLs are dropped.
#[derive(Debug, Clone, Default)]
pub struct FixtureClient {
    backlinks: BTreeMap<CanonicalUrl, Vec<CanonicalUrl>>,
    search: BTreeMap<String, Vec<CanonicalUrl>>,
}

impl FixtureClient {
    pub fn from_json(text: &str) -> Result<FixtureClient, ClientError> {
        let file: FixtureFile = serde_json::from_str(text).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        let parse_all = |urls: Vec<String>| urls.iter().filter_map(|u| u.parse().ok()).collect::<Vec<CanonicalUrl>>();
        let mut backlinks = BTreeMap::new();
        for (k, v) in file.backlinks {
            let key: CanonicalUrl =
                k.parse().map_err(|e| ClientError::BadResponse(format!("backlink key `{k}`: {e}")))?;
            backlinks.insert(key, parse_all(v));
        }
        let search = file.search.into_iter().map(|(q, v)| (q, parse_all(v))).collect();
        Ok(FixtureClient { backlinks, search })
    }

    pub fn from_path(path: &Path) -> Result<FixtureClient, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::Unavailable(format!("{}: {e}", path.display())))?;
        FixtureClient::from_json(&text)
    }
}

impl BacklinkClient for FixtureClient {
    fn backlinks(&self, url: &CanonicalUrl, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        Ok(self.backlinks.get(url).map(|v| v.iter().take(cap).cloned().collect()).unwrap_or_default())
    }
}

impl SearchClient for FixtureClient {
    fn search(&self, query: &str, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        Ok(self.search.get(query).map(|v| v.iter().take(cap).cloned().collect()).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_lookup_and_caps() {
        let c = FixtureClient::from_json(
            r#"{"backlinks": {"http://a.com/": ["http://r1.com/", "http://r2.com/", "ftp://x"]},
                "search": {"emotet OR cve": ["http://s1.com/", "http://s2.com/", "http://s3.com/"]}}"#,
        )
        .unwrap();
        let a: CanonicalUrl = "http://a.com".parse().unwrap();
        let got: Vec<String> = c.backlinks(&a, 25).unwrap().iter().map(|u| u.to_string()).collect();
        assert_eq!(got, ["http://r1.com/", "http://r2.com/"]);
        assert_eq!(c.search("emotet OR cve", 2).unwrap().len(), 2);
        assert!(c.search("unknown", 10).unwrap().is_empty());
    }

    #[test]
    fn malformed_fixture_is_rejected() {
        assert!(FixtureClient::from_json("{\"backlinks\": []}").is_err());
        assert!(FixtureClient::from_json("{\"other\": {}}").is_err());
    }
}
