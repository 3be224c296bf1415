//! Fetch, backlink and search services answering from a synthetic web.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use crate::actions::keywords::parse_or_query;
use crate::actions::{BacklinkClient, ClientError, SearchClient};
use crate::canonical::CanonicalUrl;
use crate::fetcher::{RawResponse, Transport, TransportError};

use super::SyntheticWeb;

/// Paths every synthetic site disallows.
pub const PRIVATE_PREFIX: &str = "/private/";

/// Serves each page as minimal HTML and each host's robots.txt.
pub struct SimTransport {
    pages: BTreeMap<CanonicalUrl, String>,
    hosts: BTreeSet<String>,
}

impl SimTransport {
    pub fn new(web: &SyntheticWeb) -> SimTransport {
        let pages = web.pages.values().map(|p| (p.url.clone(), render_html(p))).collect();
        let hosts = web.pages.keys().map(|u| u.origin().to_string()).collect();
        SimTransport { pages, hosts }
    }
}

fn render_html(page: &super::SynthPage) -> String {
    let mut html = String::from("<!doctype html><html><head><title>");
    html.push_str(&page.title);
    html.push_str("</title></head><body><header><a href=\"/\">Home</a></header><article>");
    for para in page.text.split('\n') {
        html.push_str("<p>");
        html.push_str(para);
        html.push_str("</p>");
    }
    html.push_str("</article><aside><ul>");
    for link in &page.out_links {
        html.push_str(&format!("<li><a href=\"{link}\">related</a></li>"));
    }
    html.push_str("</ul></aside><footer>");
    // Share and media links exercise the blacklist; they are never served.
    html.push_str(&format!(
        "<a href=\"https://twitter.com/intent/tweet?url={0}\">share</a> <a href=\"{0}.png\">print</a>",
        page.url
    ));
    html.push_str("</footer></body></html>");
    html
}

impl Transport for SimTransport {
    fn get(&self, url: &CanonicalUrl, _ua: &str, _timeout: Duration, _max: usize) -> Result<RawResponse, TransportError> {
        let ok = |body: &str, content_type: &str| RawResponse {
            status: 200,
            location: None,
            content_type: content_type.to_string(),
            body: body.as_bytes().to_vec(),
            truncated: false,
        };
        if url.path() == "/robots.txt" && self.hosts.contains(url.origin()) {
            return Ok(ok(&format!("User-agent: *\nDisallow: {PRIVATE_PREFIX}\n"), "text/plain"));
        }
        match self.pages.get(url) {
            Some(html) => Ok(ok(html, "text/html; charset=utf-8")),
            None => Err(TransportError::Failed(format!("{url} is not part of the synthetic web"))),
        }
    }
}

/// Reverse-edge index over the links the backlink service has crawled.
pub struct SimBacklinks {
    reverse: BTreeMap<CanonicalUrl, Vec<CanonicalUrl>>,
}

impl SimBacklinks {
    pub fn new(web: &SyntheticWeb) -> SimBacklinks {
        let mut reverse: BTreeMap<CanonicalUrl, Vec<CanonicalUrl>> = BTreeMap::new();
        for src in web.in_order() {
            for dst in &src.indexed_links {
                reverse.entry(dst.clone()).or_default().push(src.url.clone());
            }
        }
        SimBacklinks { reverse }
    }
}

impl BacklinkClient for SimBacklinks {
    fn backlinks(&self, url: &CanonicalUrl, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        Ok(self.reverse.get(url).map(|v| v.iter().take(cap).cloned().collect()).unwrap_or_default())
    }
}

/// OR-query search: a page matches when it contains all words of at least
/// one term; matches are returned in popularity order.
pub struct SimSearch {
    docs: Vec<(CanonicalUrl, BTreeSet<String>)>,
}

impl SimSearch {
    pub fn new(web: &SyntheticWeb) -> SimSearch {
        let mut docs: Vec<(usize, CanonicalUrl, BTreeSet<String>)> = web
            .in_order()
            .map(|p| {
                let tokens = crate::relevance::tokenize(&p.text).collect();
                (p.popularity, p.url.clone(), tokens)
            })
            .collect();
        docs.sort_by_key(|d| d.0);
        SimSearch { docs: docs.into_iter().map(|(_, u, t)| (u, t)).collect() }
    }
}

impl SearchClient for SimSearch {
    fn search(&self, query: &str, cap: usize) -> Result<Vec<CanonicalUrl>, ClientError> {
        let terms = parse_or_query(query);
        Ok(self
            .docs
            .iter()
            .filter(|(_, tokens)| terms.iter().any(|t| t.iter().all(|w| tokens.contains(w))))
            .take(cap)
            .map(|(url, _)| url.clone())
            .collect())
    }
}
