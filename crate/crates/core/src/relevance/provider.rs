use serde::{Deserialize, Serialize};

use super::{Embedding, RelevanceError};

/// Turns sentences into vectors. Implementations must be deterministic for
/// a fixed instance and safe to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    /// Maximum whitespace tokens per sentence; longer input is truncated.
    fn token_budget(&self) -> usize {
        512
    }

    /// Model or provider identity, echoed into run reports.
    fn identity(&self) -> String;

    /// One vector per input text, in request order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, RelevanceError>;
}

/// Bag-of-words hashing embedder.
///
/// Each lowercase alphanumeric token lands in one of `dimension` buckets with
/// a ±1 sign chosen by a seeded 64-bit hash; the bucket sums are
/// L2-normalized. Cosine between two texts then tracks their token overlap.
#[derive(Debug, Clone)]
pub struct DeterministicHashProvider {
    dimension: usize,
    seed: u64,
}

impl DeterministicHashProvider {
    pub fn new(dimension: usize, seed: u64) -> DeterministicHashProvider {
        assert!(dimension > 0, "dimension must be positive");
        DeterministicHashProvider { dimension, seed }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            let h = token_hash(&token, self.seed);
            let bucket = (h % self.dimension as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for DeterministicHashProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn identity(&self) -> String {
        format!("deterministic-hash(dim={}, seed={})", self.dimension, self.seed)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, RelevanceError> {
        texts.iter().map(|t| Embedding::new(self.embed_one(t))).collect()
    }
}

/// Lowercase runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Seeded FNV-1a followed by a splitmix64 finalizer; stable across
/// platforms and toolchains.
fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Body of `POST /embed` on a remote embedding service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

/// Response of `POST /embed`: one vector per requested text, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dimension: usize,
    pub vectors: Vec<Vec<f64>>,
}

/// Validates a `POST /embed` response body against the request it answers.
pub fn decode_embed_response(body: &str, expected: usize) -> Result<Vec<Embedding>, RelevanceError> {
    let unavailable = |msg: String| RelevanceError::ProviderUnavailable(msg);
    let resp: EmbedResponse = serde_json::from_str(body).map_err(|e| unavailable(format!("bad response: {e}")))?;
    if resp.vectors.len() != expected {
        return Err(unavailable(format!("expected {expected} vectors, got {}", resp.vectors.len())));
    }
    resp.vectors
        .into_iter()
        .map(|v| {
            if v.len() != resp.dimension {
                return Err(RelevanceError::DimensionMismatch(resp.dimension, v.len()));
            }
            Embedding::new(v)
        })
        .collect()
}
