//! Relevance classification.
//!
//! Page text is embedded through an [`EmbeddingProvider`] (sentence
//! embeddings, mean-pooled and L2-normalized) and compared against every
//! seed page by cosine similarity. A page's similarity to the seed set is
//! the maximum over the members; the label follows from two inclusive
//! thresholds.

mod provider;

pub use provider::{
    decode_embed_response, tokenize, DeterministicHashProvider, EmbedRequest, EmbedResponse, EmbeddingProvider,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::CanonicalUrl;
use crate::model::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelevanceError {
    #[error("document has no embeddable content")]
    EmptyDocument,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("seed set is empty")]
    EmptySeedSet,
}

/// Dense vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Embedding, RelevanceError> {
        if values.is_empty() {
            return Err(RelevanceError::DimensionMismatch(0, 0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RelevanceError::NonFinite);
        }
        Ok(Embedding { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Embedding, RelevanceError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(RelevanceError::ZeroVector);
        }
        Ok(Embedding { values: self.values.iter().map(|v| v / norm).collect() })
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding { values: self.values.iter().map(|v| v * factor).collect() }
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = RelevanceError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, RelevanceError> {
    if a.dimension() != b.dimension() {
        return Err(RelevanceError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RelevanceError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Splits on `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    push_trimmed(&mut out, &text[start..end]);
                    start = end;
                }
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

fn truncate_tokens(sentence: &str, budget: usize) -> String {
    sentence.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")
}

/// Mean of the sentence embeddings, L2-normalized.
pub fn embed_document(text: &str, provider: &dyn EmbeddingProvider) -> Result<Embedding, RelevanceError> {
    if text.trim().is_empty() {
        return Err(RelevanceError::EmptyDocument);
    }
    let budget = provider.token_budget().max(1);
    let sentences: Vec<String> = split_sentences(text).into_iter().map(|s| truncate_tokens(s, budget)).collect();
    let vectors = provider.embed_batch(&sentences)?;
    if vectors.len() != sentences.len() {
        return Err(RelevanceError::ProviderUnavailable(format!(
            "provider returned {} vectors for {} sentences",
            vectors.len(),
            sentences.len()
        )));
    }
    let dim = provider.dimension();
    let mut sum = vec![0.0; dim];
    for v in &vectors {
        if v.dimension() != dim {
            return Err(RelevanceError::DimensionMismatch(dim, v.dimension()));
        }
        for (acc, x) in sum.iter_mut().zip(v.values()) {
            *acc += x;
        }
    }
    let count = vectors.len() as f64;
    let mean = Embedding::new(sum.into_iter().map(|x| x / count).collect())?;
    mean.normalized().map_err(|_| RelevanceError::EmptyDocument)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMember {
    pub url: CanonicalUrl,
    pub embedding: Embedding,
}

/// Reference pages defining the topic. Only ever grows during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    members: Vec<SeedMember>,
}

impl SeedSet {
    pub fn new() -> SeedSet {
        SeedSet::default()
    }

    pub fn push(&mut self, url: CanonicalUrl, embedding: Embedding) {
        self.members.push(SeedMember { url, embedding });
    }

    pub fn members(&self) -> &[SeedMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, url: &CanonicalUrl) -> bool {
        self.members.iter().any(|m| &m.url == url)
    }
}

pub fn similarity_to_set(e: &Embedding, seeds: &SeedSet) -> Result<f64, RelevanceError> {
    let mut best: Option<f64> = None;
    for member in &seeds.members {
        let s = cosine_similarity(e, &member.embedding)?;
        best = Some(best.map_or(s, |b| b.max(s)));
    }
    best.ok_or(RelevanceError::EmptySeedSet)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub relevance: f64,
    pub seed: f64,
}

/// Both thresholds are inclusive.
pub fn label_for(similarity: f64, thresholds: Thresholds) -> Label {
    if similarity >= thresholds.seed {
        Label::SeedCandidate
    } else if similarity >= thresholds.relevance {
        Label::Relevant
    } else {
        Label::Irrelevant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub embedding: Option<Embedding>,
    pub similarity: Option<f64>,
    pub label: Label,
}

/// Embeds `page_text` and labels it against `seeds`.
///
/// Text that yields no embedding is labeled irrelevant with no similarity;
/// provider outages are still errors.
pub fn classify(
    page_text: &str,
    seeds: &SeedSet,
    thresholds: Thresholds,
    provider: &dyn EmbeddingProvider,
) -> Result<Classification, RelevanceError> {
    let embedding = match embed_document(page_text, provider) {
        Ok(e) => e,
        Err(RelevanceError::EmptyDocument) => {
            return Ok(Classification { embedding: None, similarity: None, label: Label::Irrelevant })
        }
        Err(e) => return Err(e),
    };
    let similarity = similarity_to_set(&embedding, seeds)?;
    Ok(Classification { label: label_for(similarity, thresholds), similarity: Some(similarity), embedding: Some(embedding) })
}
