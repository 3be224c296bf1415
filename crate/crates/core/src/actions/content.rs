//! Main-content extraction by text density.

use scraper::{ElementRef, Html, Node};
use thiserror::Error;

/// Blocks shorter than this are never considered main content.
pub const MIN_CONTENT_CHARS: usize = 100;

const BOILERPLATE: &[&str] =
    &["script", "style", "nav", "footer", "header", "aside", "noscript", "form", "template", "iframe", "svg"];
const CANDIDATES: &[&str] = &["article", "main", "section", "div", "body", "td"];
const PARAGRAPHS: &[&str] = &["p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "pre", "blockquote", "dd", "figcaption"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContentError {
    #[error("no text block longer than {MIN_CONTENT_CHARS} characters")]
    NoContent,
}

/// Pluggable main-content extractor.
pub trait ContentExtractor: Send + Sync {
    fn extract(&self, html: &str) -> Result<String, ContentError>;
}

/// Picks the block with the most non-link text per tag.
#[derive(Debug, Default, Clone, Copy)]
pub struct DensityExtractor;

impl ContentExtractor for DensityExtractor {
    fn extract(&self, html: &str) -> Result<String, ContentError> {
        extract_main_content(html)
    }
}

pub fn extract_main_content(html: &str) -> Result<String, ContentError> {
    let doc = Html::parse_document(html);
    let mut best: Option<(f64, usize, ElementRef)> = None;
    visit(doc.root_element(), &mut best);
    let (_, _, block) = best.ok_or(ContentError::NoContent)?;

    let mut paragraphs = Vec::new();
    collect_paragraphs(block, &mut paragraphs);
    let text = if paragraphs.is_empty() { squash(&visible_text(block, true)) } else { paragraphs.join("\n") };
    if text.chars().count() > MIN_CONTENT_CHARS {
        Ok(text)
    } else {
        Err(ContentError::NoContent)
    }
}

#[derive(Default)]
struct Stats {
    text_chars: usize,
    link_chars: usize,
    tags: usize,
}

/// Scores every candidate block below `el`; returns the subtree totals.
fn visit<'a>(el: ElementRef<'a>, best: &mut Option<(f64, usize, ElementRef<'a>)>) -> Stats {
    let mut stats = Stats { tags: 1, ..Stats::default() };
    for child in el.children() {
        match child.value() {
            Node::Text(t) => stats.text_chars += squash(t).chars().count(),
            Node::Element(_) => {
                let child_el = ElementRef::wrap(child).expect("element node");
                let name = child_el.value().name();
                if BOILERPLATE.contains(&name) {
                    continue;
                }
                let sub = visit(child_el, best);
                if name == "a" {
                    stats.link_chars += sub.text_chars + sub.link_chars;
                } else {
                    stats.text_chars += sub.text_chars;
                    stats.link_chars += sub.link_chars;
                }
                stats.tags += sub.tags;
            }
            _ => {}
        }
    }
    if CANDIDATES.contains(&el.value().name()) && stats.text_chars > MIN_CONTENT_CHARS {
        let density = stats.text_chars as f64 / stats.tags as f64;
        // Strictly greater keeps the outermost block on ties.
        if best.as_ref().is_none_or(|(d, _, _)| density > *d) {
            *best = Some((density, stats.text_chars, el));
        }
    }
    stats
}

fn collect_paragraphs(el: ElementRef, out: &mut Vec<String>) {
    for child in el.children().filter_map(ElementRef::wrap) {
        let name = child.value().name();
        if BOILERPLATE.contains(&name) {
            continue;
        }
        if PARAGRAPHS.contains(&name) {
            let text = squash(&visible_text(child, true));
            if !text.is_empty() {
                out.push(text);
            }
        } else {
            collect_paragraphs(child, out);
        }
    }
}

fn visible_text(el: ElementRef, include_links: bool) -> String {
    let mut out = String::new();
    for child in el.children() {
        match child.value() {
            Node::Text(t) => {
                out.push_str(t);
            }
            Node::Element(e) => {
                if BOILERPLATE.contains(&e.name()) || (!include_links && e.name() == "a") {
                    continue;
                }
                let sub = visible_text(ElementRef::wrap(child).expect("element node"), include_links);
                out.push(' ');
                out.push_str(&sub);
                out.push(' ');
            }
            _ => {}
        }
    }
    out
}

/// Collapses whitespace runs to single spaces.
fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
