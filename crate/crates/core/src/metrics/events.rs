//! Append-only JSONL event log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::canonical::{CanonicalUrl, Domain};
use crate::model::{Action, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Bandit initialization: every arm pulled once on a seed page.
    Discovery,
    /// A step of the main loop: one frontier pop, one pull.
    Crawl,
}

/// A page classified for the first time during a pull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedPage {
    pub url: CanonicalUrl,
    pub domain: Domain,
    pub similarity: Option<f64>,
    pub label: Label,
}

/// One bandit pull. `url`, `similarity` and `label` describe the subject
/// page; the subject of a user seed has no similarity or label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlEvent {
    pub step: u64,
    pub phase: Phase,
    pub action: Action,
    pub url: CanonicalUrl,
    pub similarity: Option<f64>,
    pub label: Option<Label>,
    pub reward_raw: f64,
    pub reward_normalized: f64,
    pub new_domains: Vec<Domain>,
    pub retrieved: Vec<RetrievedPage>,
    pub failed: bool,
    /// Engine clock, milliseconds.
    pub timestamp: u64,
}

/// Writes one event per line, flushing after each.
pub struct EventWriter {
    out: BufWriter<File>,
}

impl EventWriter {
    pub fn create(path: &Path) -> Result<EventWriter, MetricsError> {
        let file = File::create(path).map_err(|e| MetricsError::io(path, e))?;
        Ok(EventWriter { out: BufWriter::new(file) })
    }

    /// Opens an existing log, keeping only its first `keep` events. Used on
    /// resume, where the log may run ahead of the checkpoint.
    pub fn resume(path: &Path, keep: usize) -> Result<(EventWriter, Vec<CrawlEvent>), MetricsError> {
        let mut events = read_events(path)?;
        if events.len() < keep {
            return Err(MetricsError::CorruptCheckpoint(format!(
                "checkpoint expects {keep} logged events, {} has {}",
                path.display(),
                events.len()
            )));
        }
        events.truncate(keep);
        let mut writer = EventWriter::create(path)?;
        for e in &events {
            writer.append(e)?;
        }
        Ok((writer, events))
    }

    pub fn append(&mut self, event: &CrawlEvent) -> Result<(), MetricsError> {
        let line = serde_json::to_string(event).expect("events serialize");
        writeln!(self.out, "{line}").and_then(|_| self.out.flush()).map_err(|e| MetricsError::Io(e.to_string()))
    }
}

pub fn read_events(path: &Path) -> Result<Vec<CrawlEvent>, MetricsError> {
    let file = File::open(path).map_err(|e| MetricsError::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| MetricsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| MetricsError::Log { line: i + 1, message: e.to_string() })?;
        events.push(event);
    }
    Ok(events)
}

pub fn parse_events(text: &str) -> Result<Vec<CrawlEvent>, MetricsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| MetricsError::Log { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn events_to_jsonl(events: &[CrawlEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect()
}

/// Step numbers must run 1, 2, 3, ... without gaps.
pub fn check_step_sequence(events: &[CrawlEvent]) -> Result<(), MetricsError> {
    for (i, e) in events.iter().enumerate() {
        if e.step != i as u64 + 1 {
            return Err(MetricsError::Log { line: i + 1, message: format!("expected step {}, found {}", i + 1, e.step) });
        }
    }
    Ok(())
}
