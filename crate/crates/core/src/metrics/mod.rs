//! Run accounting: harvest rate, the results-table report, the event log
//! and versioned checkpoints.

pub mod events;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{domain_of, CanonicalUrl, Domain};
use crate::model::{Action, ActionSet, Label};
pub use events::{check_step_sequence, events_to_jsonl, parse_events, read_events, CrawlEvent, EventWriter, Phase, RetrievedPage};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{relevant} relevant pages exceed {total} total pages")]
    CountInconsistent { relevant: u64, total: u64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("event log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl MetricsError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> MetricsError {
        MetricsError::Io(format!("{}: {e}", path.display()))
    }
}

/// `100 · relevant / total`, or 0 for an empty crawl.
pub fn harvest_rate(relevant: u64, total: u64) -> Result<f64, MetricsError> {
    if relevant > total {
        return Err(MetricsError::CountInconsistent { relevant, total });
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * relevant as f64 / total as f64)
}

/// Settings echoed into a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub seeds: usize,
    pub actions: ActionSet,
    pub relevance_threshold: f64,
    pub seed_threshold: f64,
    pub max_steps: u64,
    pub domain_weight: f64,
    pub rng_seed: u64,
    pub policy: String,
    pub embedding: String,
}

/// Everything a report needs besides the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    /// User seed pages that were fetched and embedded.
    pub seed_pages: Vec<CanonicalUrl>,
    pub config: ConfigEcho,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Crawl-phase steps; discovery pulls are not counted.
    pub steps: u64,
    /// Seed pages plus every page classified during the run.
    pub pages_total: u64,
    /// Non-seed pages labeled relevant (including promoted seeds).
    pub pages_relevant: u64,
    pub new_seeds: u64,
    pub harvest_rate: f64,
    pub max_similarity: Option<f64>,
    pub domains_total: u64,
    pub domains_relevant: u64,
    pub top_method: Option<Action>,
    pub top_method_avg_similarity: Option<f64>,
    pub config: ConfigEcho,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text table with a header row.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        let header = ["S", "|P|", "|P+|", "|Seed|", "HR", "max~", "|Dom|", "|Dom+|", "TM", "avg~TM"];
        let row = [
            self.steps.to_string(),
            self.pages_total.to_string(),
            self.pages_relevant.to_string(),
            self.new_seeds.to_string(),
            format!("{:.2}", self.harvest_rate),
            opt(self.max_similarity, 4),
            self.domains_total.to_string(),
            self.domains_relevant.to_string(),
            self.top_method.map_or("-".to_string(), |a| a.to_string()),
            opt(self.top_method_avg_similarity, 4),
        ];
        let widths: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "variant TC_{}  policy {}  seeds {}  budget {}",
            self.config.actions.variant_name(),
            self.config.policy,
            self.config.seeds,
            self.config.max_steps
        );
        for cells in [header.iter().map(|s| s.to_string()).collect::<Vec<_>>(), row.to_vec()] {
            let line: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  "));
        }
        out
    }
}

/// Aggregates a finished run. A pure function of its inputs.
pub fn build_report(events: &[CrawlEvent], ctx: &ReportContext) -> RunReport {
    let mut pages_total = ctx.seed_pages.len() as u64;
    let mut pages_relevant = 0u64;
    let mut new_seeds = 0u64;
    let mut max_similarity: Option<f64> = None;
    let mut domains: BTreeSet<Domain> = ctx.seed_pages.iter().map(domain_of).collect();
    let mut relevant_domains: BTreeSet<Domain> = BTreeSet::new();
    let mut per_arm: BTreeMap<Action, (f64, u64)> = BTreeMap::new();
    let mut steps = 0;

    for e in events {
        if e.phase == Phase::Crawl {
            steps += 1;
        }
        for p in &e.retrieved {
            pages_total += 1;
            domains.insert(p.domain.clone());
            if p.label.is_relevant() {
                pages_relevant += 1;
                relevant_domains.insert(p.domain.clone());
            }
            if p.label == Label::SeedCandidate {
                new_seeds += 1;
            }
            if let Some(s) = p.similarity {
                max_similarity = Some(max_similarity.map_or(s, |m| m.max(s)));
                let arm = per_arm.entry(e.action).or_insert((0.0, 0));
                arm.0 += s;
                arm.1 += 1;
            }
        }
    }

    let mut top: Option<(Action, f64)> = None;
    for action in Action::ALL {
        let Some(&(sum, n)) = per_arm.get(&action) else { continue };
        let avg = sum / n as f64;
        if top.is_none_or(|(_, best)| avg > best) {
            top = Some((action, avg));
        }
    }

    RunReport {
        steps,
        pages_total,
        pages_relevant,
        new_seeds,
        harvest_rate: harvest_rate(pages_relevant, pages_total).expect("relevant pages are a subset"),
        max_similarity,
        domains_total: domains.len() as u64,
        domains_relevant: relevant_domains.len() as u64,
        top_method: top.map(|t| t.0),
        top_method_avg_similarity: top.map(|t| t.1),
        config: ctx.config.clone(),
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    digest: String,
    state: serde_json::Value,
}

fn digest_of(state: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(state).expect("json values serialize");
    format!("sha256:{}", hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Serializes `state` into a versioned, digest-protected JSON document.
pub fn checkpoint<T: Serialize>(state: &T) -> String {
    let value = serde_json::to_value(state).expect("checkpoint state serializes");
    let doc = CheckpointDoc { version: CHECKPOINT_VERSION, digest: digest_of(&value), state: value };
    serde_json::to_string(&doc).expect("checkpoint serializes") + "\n"
}

pub fn restore<T: DeserializeOwned>(document: &str) -> Result<T, MetricsError> {
    let corrupt = |m: String| MetricsError::CorruptCheckpoint(m);
    let doc: CheckpointDoc = serde_json::from_str(document).map_err(|e| corrupt(e.to_string()))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {}", doc.version)));
    }
    let actual = digest_of(&doc.state);
    if actual != doc.digest {
        return Err(corrupt(format!("digest mismatch: recorded {}, computed {actual}", doc.digest)));
    }
    serde_json::from_value(doc.state).map_err(|e| corrupt(e.to_string()))
}
