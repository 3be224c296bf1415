//! Live-mode adapters over HTTP.
//!
//! Search: `GET <endpoint>?q=<query>&count=<cap>`; backlinks:
//! `GET <endpoint>?url=<url>&count=<cap>`. Both answer with a JSON array of
//! URL strings. Embeddings: `POST <endpoint>` with `{"texts": [...]}`,
//! answered by `{"dimension": d, "vectors": [[...], ...]}`. When an adapter
//! names `api_key_env`, that variable's value is sent as a bearer token.

use std::io::Read;
use std::time::Duration;

use threatcrawl_core::actions::{BacklinkClient, ClientError, SearchClient};
use threatcrawl_core::canonical::CanonicalUrl;
use threatcrawl_core::config::HttpAdapter;
use threatcrawl_core::fetcher::{RawResponse, Transport, TransportError};
use threatcrawl_core::relevance::{
    decode_embed_response, EmbedRequest, Embedding, EmbeddingProvider, RelevanceError,
};
use ureq::Agent;

const SERVICE_TIMEOUT: Duration = Duration::from_secs(30);

/// Page transport. Redirects are returned to the fetcher, which re-checks
/// robots and the blacklist for each hop.
pub struct HttpTransport {
    agent: Agent,
}

impl HttpTransport {
    pub fn new() -> HttpTransport {
        let agent = Agent::config_builder().max_redirects(0).http_status_as_error(false).build().into();
        HttpTransport { agent }
    }
}

fn transport_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        e => TransportError::Failed(e.to_string()),
    }
}

impl Transport for HttpTransport {
    fn get(
        &self,
        url: &CanonicalUrl,
        user_agent: &str,
        timeout: Duration,
        max_body_bytes: usize,
    ) -> Result<RawResponse, TransportError> {
        let mut resp = self
            .agent
            .get(url.as_str())
            .header("User-Agent", user_agent)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .call()
            .map_err(transport_error)?;
        let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
        let status = resp.status().as_u16();
        let location = header("location");
        let content_type = header("content-type").unwrap_or_default();
        let mut body = Vec::new();
        resp.body_mut()
            .as_reader()
            .take(max_body_bytes as u64 + 1)
            .read_to_end(&mut body)
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        let truncated = body.len() > max_body_bytes;
        body.truncate(max_body_bytes);
        Ok(RawResponse { status, location, content_type, body, truncated })
    }
}

struct Service {
    agent: Agent,
    endpoint: String,
    token: Option<String>,
}

impl Service {
    fn new(adapter: &HttpAdapter) -> Service {
        let agent = Agent::config_builder().timeout_global(Some(SERVICE_TIMEOUT)).build().into();
        let token = adapter.api_key_env.as_ref().and_then(|var| std::env::var(var).ok());
        Service { agent, endpoint: adapter.endpoint.clone(), token }
    }

    fn get_urls(&self, params: &[(&str, &str)], cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        let cap_text = cap.to_string();
        let mut req = self.agent.get(&self.endpoint).query("count", &cap_text);
        for (k, v) in params {
            req = req.query(*k, *v);
        }
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let body = req
            .call()
            .map_err(|e| ClientError::Unavailable(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        let urls: Vec<String> = serde_json::from_str(&body).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        Ok(urls.iter().filter_map(|u| u.parse().ok()).take(cap).collect())
    }
}

pub struct HttpSearch(Service);

impl HttpSearch {
    pub fn new(adapter: &HttpAdapter) -> HttpSearch {
        HttpSearch(Service::new(adapter))
    }
}

impl SearchClient for HttpSearch {
    fn search(&self, query: &str, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        self.0.get_urls(&[("q", query)], cap)
    }
}

pub struct HttpBacklinks(Service);

impl HttpBacklinks {
    pub fn new(adapter: &HttpAdapter) -> HttpBacklinks {
        HttpBacklinks(Service::new(adapter))
    }
}

impl BacklinkClient for HttpBacklinks {
    fn backlinks(&self, url: &CanonicalUrl, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        self.0.get_urls(&[("url", url.as_str())], cap)
    }
}

pub struct HttpEmbedding {
    service: Service,
    dimension: usize,
}

impl HttpEmbedding {
    pub fn new(adapter: &HttpAdapter, dimension: usize) -> HttpEmbedding {
        HttpEmbedding { service: Service::new(adapter), dimension }
    }
}

impl EmbeddingProvider for HttpEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn identity(&self) -> String {
        format!("http({}, dim={})", self.service.endpoint, self.dimension)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, RelevanceError> {
        let unavailable = |e: ureq::Error| RelevanceError::ProviderUnavailable(e.to_string());
        let mut req = self.service.agent.post(&self.service.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.service.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let payload = serde_json::to_string(&EmbedRequest { texts: texts.to_vec() }).expect("request serializes");
        let body = req.send(payload).map_err(unavailable)?.body_mut().read_to_string().map_err(unavailable)?;
        let vectors = decode_embed_response(&body, texts.len())?;
        if let Some(v) = vectors.iter().find(|v| v.dimension() != self.dimension) {
            return Err(RelevanceError::DimensionMismatch(self.dimension, v.dimension()));
        }
        Ok(vectors)
    }
}
