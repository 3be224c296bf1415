//! Deterministic synthetic web for offline end-to-end runs.
//!
//! Pages belong to topical clusters. Each cluster draws its text from its
//! own Zipf-weighted vocabulary mixed with a shared background vocabulary,
//! so hashed bag-of-words embeddings separate clusters by construction.
//! Links follow a planted-partition model: a page links to each page of its
//! own cluster with probability `intra_link_prob` and to each page of other
//! clusters with probability `inter_link_prob` on average, skewed toward
//! popular pages by `hub_exponent`.
//!
//! The oracle services behave like their live counterparts: the backlink
//! index knows only a sample of the links, search ranks matches by
//! popularity rather than topic, and some pages sit under a path that
//! robots.txt disallows. Off-topic pages borrow on-topic words and rank
//! ahead in popularity, so keyword search surfaces plausible but irrelevant
//! results.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::DensityExtractor;
use crate::bandit::Policy;
use crate::canonical::CanonicalUrl;
use crate::config::CrawlConfig;
use crate::engine::{Engine, EngineError, Services};
use crate::fetcher::VirtualClock;
use crate::metrics::{CrawlEvent, RunReport};
use crate::relevance::{DeterministicHashProvider, Embedding, EmbeddingProvider};
pub use oracle::{SimBacklinks, SimSearch, SimTransport, PRIVATE_PREFIX};

/// Seed of the hash embedding used by simulations.
pub const SIM_EMBEDDING_SEED: u64 = 0;
/// Start of the simulated clock (2024-01-01T00:00:00Z).
pub const SIM_EPOCH_MS: u64 = 1_704_067_200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub n_clusters: usize,
    /// Clusters `0..relevant_clusters` are on-topic.
    pub relevant_clusters: usize,
    pub pages_per_cluster: usize,
    pub intra_link_prob: f64,
    pub inter_link_prob: f64,
    pub vocab_per_cluster: usize,
    pub shared_vocab: usize,
    /// Fraction of each page's words drawn from the shared vocabulary.
    pub noise_fraction: f64,
    /// Zipf exponent for word choice within a vocabulary.
    pub zipf_exponent: f64,
    pub words_per_page: usize,
    /// Words each page repeats as its own subject, drawn from the shared
    /// vocabulary.
    pub focus_words: usize,
    /// Fraction of each page's words spent on its focus words.
    pub focus_share: f64,
    /// Cross-cluster links favor popular pages on both ends with weight
    /// `1 / (rank + 1)^hub_exponent`; 0 gives uniform links.
    pub hub_exponent: f64,
    /// Share of an off-topic page's words borrowed from an on-topic cluster.
    pub borrow_fraction: f64,
    /// How many distinct on-topic words each off-topic page borrows.
    pub borrow_words: usize,
    /// Pushes off-topic pages ahead in the popularity order; 0 is neutral,
    /// 1 ranks every off-topic page first.
    pub popularity_bias: f64,
    /// Fraction of links known to the backlink service.
    pub backlink_coverage: f64,
    /// Sites (registrable domains) hosting each on-topic cluster.
    pub sites_per_cluster: usize,
    /// Sites hosting each off-topic cluster.
    pub irrelevant_sites_per_cluster: usize,
    /// Fraction of pages served under a robots-disallowed path.
    pub private_fraction: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams::standard()
    }
}

impl SimParams {
    /// The standard fixture: 4 clusters of 100 pages, 2 of them relevant.
    pub fn standard() -> SimParams {
        SimParams {
            n_clusters: 4,
            relevant_clusters: 2,
            pages_per_cluster: 100,
            intra_link_prob: 0.05,
            inter_link_prob: 0.005,
            vocab_per_cluster: 60,
            shared_vocab: 200,
            noise_fraction: 0.4,
            zipf_exponent: 0.2,
            words_per_page: 500,
            focus_words: 0,
            focus_share: 0.0,
            hub_exponent: 2.0,
            borrow_fraction: 0.1,
            borrow_words: 60,
            popularity_bias: 1.0,
            backlink_coverage: 0.45,
            sites_per_cluster: 100,
            irrelevant_sites_per_cluster: 1,
            private_fraction: 0.425,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        for (name, p) in [
            ("intra_link_prob", self.intra_link_prob),
            ("inter_link_prob", self.inter_link_prob),
            ("noise_fraction", self.noise_fraction),
            ("private_fraction", self.private_fraction),
            ("focus_share", self.focus_share),
            ("borrow_fraction", self.borrow_fraction),
            ("popularity_bias", self.popularity_bias),
            ("backlink_coverage", self.backlink_coverage),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.n_clusters == 0 || self.pages_per_cluster == 0 || self.vocab_per_cluster == 0 {
            return bad("cluster, page and vocabulary counts must be at least 1");
        }
        if self.relevant_clusters == 0 || self.relevant_clusters > self.n_clusters {
            return bad("relevant_clusters must be in 1..=n_clusters");
        }
        if self.words_per_page == 0 || self.sites_per_cluster == 0 || self.irrelevant_sites_per_cluster == 0 {
            return bad("words_per_page and site counts must be at least 1");
        }
        if self.shared_vocab == 0 && (self.noise_fraction > 0.0 || self.focus_words > 0) {
            return bad("noise and focus words need a shared vocabulary");
        }
        if self.noise_fraction + self.focus_share > 1.0 {
            return bad("noise_fraction + focus_share must not exceed 1");
        }
        for (name, x) in [("zipf_exponent", self.zipf_exponent), ("hub_exponent", self.hub_exponent)] {
            if !(x.is_finite() && x >= 0.0) {
                return bad(&format!("{name} must be a nonnegative number"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPage {
    pub url: CanonicalUrl,
    pub index: usize,
    pub cluster_id: usize,
    pub title: String,
    /// Paragraphs separated by `\n`.
    pub text: String,
    pub out_links: Vec<CanonicalUrl>,
    /// The subset of `out_links` known to the backlink service.
    pub indexed_links: Vec<CanonicalUrl>,
    /// Ground truth: the page's cluster is on-topic.
    pub relevant: bool,
    /// Rank in the search oracle's tie-break order; 0 is most popular.
    pub popularity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWeb {
    pub params: SimParams,
    pub rng_seed: u64,
    pub pages: BTreeMap<CanonicalUrl, SynthPage>,
    /// Per-cluster unit vector: the hash embedding of the cluster vocabulary.
    pub topic_vectors: Vec<Embedding>,
}

impl SyntheticWeb {
    /// Pages in generation order.
    pub fn in_order(&self) -> impl Iterator<Item = &SynthPage> {
        let mut pages: Vec<&SynthPage> = self.pages.values().collect();
        pages.sort_by_key(|p| p.index);
        pages.into_iter()
    }

    pub fn page(&self, url: &CanonicalUrl) -> Option<&SynthPage> {
        self.pages.get(url)
    }

    pub fn is_relevant(&self, url: &CanonicalUrl) -> Option<bool> {
        self.pages.get(url).map(|p| p.relevant)
    }

    /// `n` public pages from the relevant clusters, spread evenly across
    /// them, chosen deterministically from `seed`.
    pub fn pick_seeds(&self, n: usize, seed: u64) -> Vec<CanonicalUrl> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut per_cluster: Vec<Vec<&SynthPage>> = (0..self.params.relevant_clusters)
            .map(|c| {
                let mut v: Vec<&SynthPage> = self
                    .in_order()
                    .filter(|p| p.cluster_id == c && !p.url.path().starts_with(PRIVATE_PREFIX))
                    .collect();
                v.shuffle(&mut rng);
                v
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        'outer: loop {
            let mut progressed = false;
            for cluster in per_cluster.iter_mut() {
                if out.len() == n {
                    break 'outer;
                }
                if let Some(p) = cluster.pop() {
                    out.push(p.url.clone());
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        out
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "bel", "cor", "dan", "fer", "gil", "hor", "jun", "kel", "mar",
    "nor", "pel", "quo", "ras", "sol", "tur", "vek", "wyn", "xan", "yor", "zel",
];

fn make_word(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.gen_range(2..=3);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(s))).expect("positive weights")
}

const TLDS: &[&str] = &["org", "com", "net", "io"];

/// Builds a web; identical `(params, seed)` give identical webs.
pub fn generate_web(params: &SimParams, seed: u64) -> Result<SyntheticWeb, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = BTreeSet::new();
    let vocab: Vec<Vec<String>> = (0..params.n_clusters)
        .map(|_| (0..params.vocab_per_cluster).map(|_| make_word(&mut rng, &mut taken)).collect())
        .collect();
    let shared: Vec<String> = (0..params.shared_vocab).map(|_| make_word(&mut rng, &mut taken)).collect();
    let cluster_dist = zipf(params.vocab_per_cluster, params.zipf_exponent);
    let shared_dist = (params.shared_vocab > 0).then(|| zipf(params.shared_vocab, params.zipf_exponent));

    let total = params.n_clusters * params.pages_per_cluster;
    // Popularity rank: a random order, with off-topic pages pushed ahead by
    // `popularity_bias` (mainstream sites outrank niche ones).
    let keys: Vec<f64> = (0..total)
        .map(|i| {
            let off_topic = i / params.pages_per_cluster >= params.relevant_clusters;
            rng.gen::<f64>() - if off_topic { params.popularity_bias } else { 0.0 }
        })
        .collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut popularity = vec![0; total];
    for (rank, &i) in order.iter().enumerate() {
        popularity[i] = rank;
    }

    let mut urls = Vec::with_capacity(total);
    let mut drafts = Vec::with_capacity(total);
    for index in 0..total {
        let cluster = index / params.pages_per_cluster;
        let local = index % params.pages_per_cluster;
        let sites = if cluster < params.relevant_clusters {
            params.sites_per_cluster
        } else {
            params.irrelevant_sites_per_cluster
        };
        let site = local % sites;
        let tld = TLDS[(cluster + site) % TLDS.len()];
        let private = rng.gen_bool(params.private_fraction);
        let dir = if private { PRIVATE_PREFIX } else { "/" };
        let url: CanonicalUrl = format!("http://www.c{cluster}-site{site}.{tld}{dir}p{local}.html")
            .parse()
            .expect("generated urls are valid");

        let focus: Vec<&str> = match params.focus_words {
            0 => Vec::new(),
            n => shared.choose_multiple(&mut rng, n.min(shared.len())).map(String::as_str).collect(),
        };
        let borrowed: Vec<&str> = if cluster >= params.relevant_clusters {
            let source = &vocab[cluster % params.relevant_clusters];
            source.choose_multiple(&mut rng, params.borrow_words.min(source.len())).map(String::as_str).collect()
        } else {
            Vec::new()
        };
        let mut words = Vec::with_capacity(params.words_per_page);
        for _ in 0..params.words_per_page {
            let roll: f64 = rng.gen();
            let word = if roll < params.focus_share && !focus.is_empty() {
                focus[rng.gen_range(0..focus.len())]
            } else if roll < params.focus_share + params.noise_fraction {
                shared[shared_dist.as_ref().expect("validated").sample(&mut rng)].as_str()
            } else if !borrowed.is_empty() && rng.gen_bool(params.borrow_fraction) {
                borrowed[rng.gen_range(0..borrowed.len())]
            } else {
                vocab[cluster][cluster_dist.sample(&mut rng)].as_str()
            };
            words.push(word);
        }
        let text = compose_text(&words, &mut rng);
        let title = words.iter().take(4).copied().collect::<Vec<_>>().join(" ");
        urls.push(url.clone());
        drafts.push((url, cluster, title, text));
    }

    let hub: Vec<f64> = popularity.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(params.hub_exponent)).collect();
    let cross_pairs: f64 = (total - params.pages_per_cluster) as f64 * total as f64;
    let cross_weight: f64 = (0..total)
        .map(|i| {
            let same: f64 = hub[(i / params.pages_per_cluster) * params.pages_per_cluster..][..params.pages_per_cluster]
                .iter()
                .sum();
            hub[i] * (hub.iter().sum::<f64>() - same)
        })
        .sum();
    let inter_scale = params.inter_link_prob * cross_pairs / cross_weight;
    let mut links: Vec<Vec<CanonicalUrl>> = vec![Vec::new(); total];
    for (src, out) in links.iter_mut().enumerate() {
        for (dst, url) in urls.iter().enumerate() {
            if src == dst {
                continue;
            }
            let same = src / params.pages_per_cluster == dst / params.pages_per_cluster;
            let p = if same { params.intra_link_prob } else { (inter_scale * hub[src] * hub[dst]).min(1.0) };
            if rng.gen_bool(p) {
                out.push(url.clone());
            }
        }
    }

    let indexed: Vec<Vec<CanonicalUrl>> = links
        .iter()
        .map(|out| out.iter().filter(|_| rng.gen_bool(params.backlink_coverage)).cloned().collect())
        .collect();
    let pages = drafts
        .into_iter()
        .zip(indexed)
        .zip(links)
        .enumerate()
        .map(|(index, (((url, cluster_id, title, text), indexed_links), out_links))| {
            let page = SynthPage {
                url: url.clone(),
                index,
                cluster_id,
                title,
                text,
                out_links,
                indexed_links,
                relevant: cluster_id < params.relevant_clusters,
                popularity: popularity[index],
            };
            (url, page)
        })
        .collect();

    let provider = DeterministicHashProvider::new(1024, SIM_EMBEDDING_SEED);
    let topic_vectors = vocab
        .iter()
        .map(|v| provider.embed_batch(&[v.join(" ")]).expect("hash provider is infallible").remove(0))
        .collect();

    Ok(SyntheticWeb { params: params.clone(), rng_seed: seed, pages, topic_vectors })
}

/// Sentences of 8 to 14 words, three sentences per paragraph.
fn compose_text(words: &[&str], rng: &mut ChaCha8Rng) -> String {
    let mut paragraphs = Vec::new();
    let mut sentences = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let len = rng.gen_range(8..=14).min(words.len() - i);
        let mut sentence = words[i..i + len].join(" ");
        if let Some(first) = sentence.get(..1) {
            sentence.replace_range(..1, &first.to_uppercase());
        }
        sentence.push('.');
        sentences.push(sentence);
        i += len;
        if sentences.len() == 3 {
            paragraphs.push(sentences.join(" "));
            sentences.clear();
        }
    }
    if !sentences.is_empty() {
        paragraphs.push(sentences.join(" "));
    }
    paragraphs.join("\n")
}

pub const STANDARD_WEB_SEED: u64 = 42;
pub const STANDARD_SEED_COUNT: usize = 17;
pub const STANDARD_STEPS: u64 = 500;

/// The standard fixture web.
pub fn standard_web() -> SyntheticWeb {
    generate_web(&SimParams::standard(), STANDARD_WEB_SEED).expect("standard params are valid")
}

/// Defaults plus the standard seeds and step budget for `web`.
pub fn standard_config(web: &SyntheticWeb) -> CrawlConfig {
    let mut cfg = CrawlConfig::with_seeds(web.pick_seeds(STANDARD_SEED_COUNT, web.rng_seed));
    cfg.max_steps = STANDARD_STEPS;
    cfg
}

/// Oracle services over `web` with the hash embedding and a virtual clock.
pub fn sim_services(web: &SyntheticWeb, embedding_dimension: usize) -> Services {
    Services {
        transport: Arc::new(SimTransport::new(web)),
        clock: Arc::new(VirtualClock::starting_at(SIM_EPOCH_MS)),
        backlinks: Some(Arc::new(SimBacklinks::new(web))),
        search: Some(Arc::new(SimSearch::new(web))),
        provider: Arc::new(DeterministicHashProvider::new(embedding_dimension, SIM_EMBEDDING_SEED)),
        extractor: Arc::new(DensityExtractor),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub report: RunReport,
    /// Share of relevant-labeled pages that are relevant in ground truth;
    /// `None` when nothing was labeled relevant.
    pub precision: Option<f64>,
    pub events: Vec<CrawlEvent>,
}

/// Runs the whole pipeline against the oracle services of `web`.
pub fn run_simulation(cfg: &CrawlConfig, web: &SyntheticWeb, policy: Policy) -> Result<SimOutcome, EngineError> {
    let mut engine = sim_engine(cfg, web, policy)?;
    while engine.step()? {}
    Ok(outcome(&engine, web))
}

pub fn sim_engine(cfg: &CrawlConfig, web: &SyntheticWeb, policy: Policy) -> Result<Engine, EngineError> {
    Engine::new(cfg.clone(), policy, sim_services(web, cfg.embedding_dimension))
}

pub fn outcome(engine: &Engine, web: &SyntheticWeb) -> SimOutcome {
    let events = engine.events().to_vec();
    SimOutcome { report: engine.report(), precision: label_precision(&events, web), events }
}

pub fn label_precision(events: &[CrawlEvent], web: &SyntheticWeb) -> Option<f64> {
    let labeled: Vec<bool> = events
        .iter()
        .flat_map(|e| &e.retrieved)
        .filter(|p| p.label.is_relevant())
        .map(|p| web.is_relevant(&p.url).unwrap_or(false))
        .collect();
    if labeled.is_empty() {
        return None;
    }
    Some(labeled.iter().filter(|r| **r).count() as f64 / labeled.len() as f64)
}
