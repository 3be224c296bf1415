//! Forward-link extraction over the whole document.

use std::collections::BTreeSet;

use scraper::{Html, Selector};

use crate::canonical::{normalize_url, CanonicalUrl};

/// Every anchor target on the page, resolved against `<base href>` when
/// present and otherwise `base`, canonicalized and deduplicated in
/// document order. Unsupported or malformed targets are skipped.
pub fn forward_links(html: &str, base: &CanonicalUrl) -> Vec<CanonicalUrl> {
    let doc = Html::parse_document(html);
    let base_sel = Selector::parse("base[href]").expect("static selector");
    let anchor_sel = Selector::parse("a[href], area[href]").expect("static selector");

    let effective_base = doc
        .select(&base_sel)
        .next()
        .and_then(|b| b.value().attr("href"))
        .and_then(|href| normalize_url(href, Some(base)).ok())
        .unwrap_or_else(|| base.clone());

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in doc.select(&anchor_sel) {
        let Some(href) = a.value().attr("href") else { continue };
        let Ok(url) = normalize_url(href, Some(&effective_base)) else { continue };
        if seen.insert(url.clone()) {
            out.push(url);
        }
    }
    out
}
