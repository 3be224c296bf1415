//! The three search actions and the page processing they share.
//!
//! Forward (F) follows every link on the subject page, Backlink (B) asks a
//! backlink service who links to it, Keyword (K) searches for its top
//! keywords. Every candidate URL goes through the same path: blacklist and
//! robots filtering, fetch, main-content extraction, classification.

pub mod clients;
pub mod content;
pub mod keywords;
pub mod links;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bandit::PullResult;
use crate::canonical::{domain_of, CanonicalUrl, Domain};
use crate::config::CrawlConfig;
use crate::fetcher::{filter_blacklist, Fetcher};
use crate::model::{Action, PageRecord};
use crate::relevance::{classify, EmbeddingProvider, SeedSet, Thresholds};
pub use clients::{BacklinkClient, ClientError, FixtureClient, SearchClient};
pub use content::{extract_main_content, ContentError, ContentExtractor, DensityExtractor};
pub use keywords::{extract_keywords, keyword_query, KeywordSet};
pub use links::forward_links;

/// Every URL the run has attempted and every domain it has retrieved from.
/// A URL is attempted at most once per run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlRegistry {
    pages: BTreeSet<CanonicalUrl>,
    domains: BTreeSet<Domain>,
}

impl CrawlRegistry {
    pub fn knows(&self, url: &CanonicalUrl) -> bool {
        self.pages.contains(url)
    }

    /// Returns false if the URL was already known.
    pub fn mark(&mut self, url: &CanonicalUrl) -> bool {
        self.pages.insert(url.clone())
    }

    /// Returns true if the domain is new to the run.
    pub fn add_domain(&mut self, domain: Domain) -> bool {
        self.domains.insert(domain)
    }

    pub fn domains(&self) -> &BTreeSet<Domain> {
        &self.domains
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }
}

/// Services and settings an action needs.
pub struct ActionContext<'a> {
    pub fetcher: &'a Fetcher,
    pub backlinks: Option<&'a dyn BacklinkClient>,
    pub search: Option<&'a dyn SearchClient>,
    pub provider: &'a dyn EmbeddingProvider,
    pub extractor: &'a dyn ContentExtractor,
    /// Seed set as of the start of the step.
    pub seeds: &'a SeedSet,
    pub config: &'a CrawlConfig,
}

impl ActionContext<'_> {
    fn thresholds(&self) -> Thresholds {
        Thresholds { relevance: self.config.relevance_threshold, seed: self.config.seed_threshold }
    }
}

/// Candidate URLs an action proposes for `page`, before filtering.
pub fn action_candidates(action: Action, page: &PageRecord, ctx: &ActionContext) -> Result<Vec<CanonicalUrl>, ClientError> {
    match action {
        Action::Forward => Ok(page.out_links.clone()),
        Action::Backlink => {
            let client = ctx.backlinks.ok_or(ClientError::NotConfigured)?;
            let cap = ctx.config.backlink_result_cap;
            Ok(client.backlinks(&page.url, cap)?.into_iter().take(cap).collect())
        }
        Action::Keyword => {
            let client = ctx.search.ok_or(ClientError::NotConfigured)?;
            let kw = extract_keywords(&page.text, ctx.config.keyword_count, ctx.provider)
                .map_err(|e| ClientError::BadResponse(format!("no keywords for {}: {e}", page.url)))?;
            let cap = ctx.config.search_result_cap;
            Ok(client.search(&keyword_query(&kw), cap)?.into_iter().take(cap).collect())
        }
    }
}

/// Runs `action` on `page`. Client failures yield a failed, empty pull;
/// per-URL fetch or classification failures only skip that URL.
pub fn execute_action(
    action: Action,
    page: &PageRecord,
    ctx: &ActionContext,
    registry: &mut CrawlRegistry,
    step: u64,
) -> PullResult {
    let candidates = match action_candidates(action, page, ctx) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("{action} on {} failed: {e}", page.url);
            return PullResult::failed(page.url.clone(), action);
        }
    };
    let mut result = PullResult {
        source_page: page.url.clone(),
        action,
        retrieved: Vec::new(),
        new_domains: BTreeSet::new(),
        failed: false,
    };
    for url in filter_blacklist(&candidates, ctx.fetcher.blacklist()) {
        if let Some(record) = fetch_and_classify(&url, action, ctx, registry, step) {
            let domain = domain_of(&record.url);
            if registry.add_domain(domain.clone()) {
                result.new_domains.insert(domain);
            }
            result.retrieved.push(record);
        }
    }
    result
}

fn fetch_and_classify(
    url: &CanonicalUrl,
    action: Action,
    ctx: &ActionContext,
    registry: &mut CrawlRegistry,
    step: u64,
) -> Option<PageRecord> {
    if !registry.mark(url) {
        return None;
    }
    let fetched = match ctx.fetcher.fetch(url) {
        Ok(f) => f,
        Err(e) => {
            log::debug!("skip {url}: {e}");
            return None;
        }
    };
    if !fetched.is_success() || !fetched.is_html_like() {
        log::debug!("skip {url}: status {} type `{}`", fetched.status, fetched.content_type);
        return None;
    }
    if &fetched.url != url && !registry.mark(&fetched.url) {
        return None;
    }
    let html = fetched.text();
    let text = ctx.extractor.extract(&html).unwrap_or_default();
    let out_links = forward_links(&html, &fetched.url);
    let class = match classify(&text, ctx.seeds, ctx.thresholds(), ctx.provider) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("skip {url}: classification failed: {e}");
            return None;
        }
    };
    Some(PageRecord {
        url: fetched.url,
        text,
        embedding: class.embedding,
        similarity: class.similarity,
        label: class.label,
        discovered_by: action.into(),
        step,
        out_links,
    })
}
