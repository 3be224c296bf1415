//! Embedding-ranked keyword extraction and OR-query composition.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use crate::relevance::{cosine_similarity, embed_document, EmbeddingProvider, RelevanceError};

const STOPWORDS_FILE: &str = include_str!("stopwords.txt");

fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_FILE.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Up to `k` distinct lowercase keywords, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet(Vec<String>);

impl KeywordSet {
    pub fn new(keywords: Vec<String>) -> KeywordSet {
        KeywordSet(keywords)
    }

    pub fn keywords(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercase word tokens; a token is a run of alphanumeric characters.
fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn eligible(token: &str) -> bool {
    token.chars().count() >= 2 && !is_stopword(token) && !token.chars().all(|c| c.is_ascii_digit())
}

/// Unigram and bigram candidates in order of first occurrence. Bigrams are
/// adjacent eligible words within one sentence.
fn candidates(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for sentence in crate::relevance::split_sentences(text) {
        let toks = words(sentence);
        for (i, tok) in toks.iter().enumerate() {
            if !eligible(tok) {
                continue;
            }
            if seen.insert(tok.clone()) {
                out.push(tok.clone());
            }
            if let Some(next) = toks.get(i + 1).filter(|n| eligible(n)) {
                let bigram = format!("{tok} {next}");
                if seen.insert(bigram.clone()) {
                    out.push(bigram);
                }
            }
        }
    }
    out
}

/// Top-`k` candidates by cosine similarity to the document embedding; ties
/// go to the earlier first occurrence.
pub fn extract_keywords(text: &str, k: usize, provider: &dyn EmbeddingProvider) -> Result<KeywordSet, RelevanceError> {
    let cands = candidates(text);
    if cands.is_empty() || k == 0 {
        return Err(RelevanceError::EmptyDocument);
    }
    let doc = embed_document(text, provider)?;
    let vectors = provider.embed_batch(&cands)?;
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(cands.len());
    for (i, v) in vectors.iter().enumerate() {
        // Candidates hashing to an all-zero vector carry no signal.
        let score = match cosine_similarity(v, &doc) {
            Ok(s) => s,
            Err(RelevanceError::ZeroVector) => continue,
            Err(e) => return Err(e),
        };
        scored.push((score, i));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(KeywordSet(scored.into_iter().take(k).map(|(_, i)| cands[i].clone()).collect()))
}

/// `a OR "b c" OR d`: multi-word keywords are quoted.
pub fn keyword_query(keywords: &KeywordSet) -> String {
    keywords
        .0
        .iter()
        .map(|k| if k.contains(' ') { format!("\"{k}\"") } else { k.clone() })
        .collect::<Vec<_>>()
        .join(" OR ")
}

/// Splits a query built by [`keyword_query`] back into its terms; each term
/// is a list of words that must all appear.
pub fn parse_or_query(query: &str) -> Vec<Vec<String>> {
    query
        .split(" OR ")
        .map(|term| words(term.trim().trim_matches('"')))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token counts, used by tests and the search oracle.
pub fn term_frequencies(text: &str) -> HashMap<String, usize> {
    let mut tf = HashMap::new();
    for w in words(text) {
        *tf.entry(w).or_insert(0) += 1;
    }
    tf
}
