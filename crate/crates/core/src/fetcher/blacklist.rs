//! Domain, file-extension and scheme filtering applied before any request.

use std::collections::BTreeSet;

use crate::canonical::{domain_of, CanonicalUrl, Domain, Scheme};

/// Images, documents, archives/binaries and media.
pub const DEFAULT_EXTENSIONS: &[&str] = &[
    ".png", ".jpg", ".jpeg", ".gif", ".svg", ".pdf", ".doc", ".docx", ".ppt", ".pptx", ".zip", ".gz", ".exe", ".dmg",
    ".mp4", ".mp3",
];

const DEFAULT_DOMAINS_FILE: &str = include_str!("default_blacklist.txt");

/// The bundled starter list of social, video and aggregator domains.
pub fn default_domains() -> BTreeSet<Domain> {
    parse_blacklist_file(DEFAULT_DOMAINS_FILE)
}

/// One domain per line; `#` starts a comment.
pub fn parse_blacklist_file(text: &str) -> BTreeSet<Domain> {
    text.lines().filter_map(|line| Domain::new(line.split('#').next().unwrap_or(""))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blacklist {
    pub domains: BTreeSet<Domain>,
    /// Lowercase suffixes including the dot, e.g. `.pdf`.
    pub extensions: BTreeSet<String>,
    pub schemes: BTreeSet<Scheme>,
}

impl Default for Blacklist {
    /// Empty blacklist: nothing blocked.
    fn default() -> Self {
        Blacklist { domains: BTreeSet::new(), extensions: BTreeSet::new(), schemes: [Scheme::Http, Scheme::Https].into() }
    }
}

impl Blacklist {
    pub fn with_defaults() -> Blacklist {
        Blacklist {
            domains: default_domains(),
            extensions: DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            ..Blacklist::default()
        }
    }

    pub fn from_config(cfg: &crate::config::CrawlConfig) -> Blacklist {
        Blacklist {
            domains: cfg.effective_blacklist_domains(),
            extensions: cfg.blacklist_extensions.clone(),
            ..Blacklist::default()
        }
    }

    pub fn blocks(&self, url: &CanonicalUrl) -> bool {
        if !self.schemes.contains(&url.scheme()) {
            return true;
        }
        let host = url.host();
        let registrable = domain_of(url);
        let domain_hit = self.domains.iter().any(|d| {
            let d = d.as_str();
            host == d || registrable.as_str() == d || host.strip_suffix(d).is_some_and(|rest| rest.ends_with('.'))
        });
        if domain_hit {
            return true;
        }
        let path = url.path().to_ascii_lowercase();
        self.extensions.iter().any(|ext| path.ends_with(ext.as_str()))
    }
}

/// Drops blocked URLs, keeping the order of the rest.
pub fn filter_blacklist(urls: &[CanonicalUrl], bl: &Blacklist) -> Vec<CanonicalUrl> {
    urls.iter().filter(|u| !bl.blocks(u)).cloned().collect()
}
