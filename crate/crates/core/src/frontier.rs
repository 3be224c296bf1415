//! Similarity-keyed max-priority queue of pages awaiting a pull.
//!
//! Pops come out by descending priority, FIFO among equal priorities. A URL
//! is accepted at most once over the frontier's lifetime: the `enqueued` set
//! blocks duplicates while queued, `seen` blocks them after the pop.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::CanonicalUrl;

/// Priority assigned to seed pages, above any cosine similarity.
pub const SEED_PRIORITY: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrontierError {
    #[error("priority {0} is outside [-1, 2]")]
    PriorityOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    priority: f64,
    seq: u64,
    url: CanonicalUrl,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Frontier {
    heap: BinaryHeap<Entry>,
    seen: BTreeSet<CanonicalUrl>,
    enqueued: BTreeSet<CanonicalUrl>,
    next_seq: u64,
}

impl Frontier {
    pub fn new() -> Frontier {
        Frontier::default()
    }

    /// Returns whether the URL was inserted.
    pub fn push(&mut self, url: CanonicalUrl, priority: f64) -> Result<bool, FrontierError> {
        if !(-1.0..=SEED_PRIORITY).contains(&priority) {
            return Err(FrontierError::PriorityOutOfRange(priority));
        }
        if self.seen.contains(&url) || self.enqueued.contains(&url) {
            return Ok(false);
        }
        self.enqueued.insert(url.clone());
        self.heap.push(Entry { priority, seq: self.next_seq, url });
        self.next_seq += 1;
        Ok(true)
    }

    pub fn pop_max(&mut self) -> Option<(CanonicalUrl, f64)> {
        let entry = self.heap.pop()?;
        self.enqueued.remove(&entry.url);
        self.seen.insert(entry.url.clone());
        Some((entry.url, entry.priority))
    }

    pub fn peek(&self) -> Option<(&CanonicalUrl, f64)> {
        self.heap.peek().map(|e| (&e.url, e.priority))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    pub fn is_known(&self, url: &CanonicalUrl) -> bool {
        self.seen.contains(url) || self.enqueued.contains(url)
    }

    /// Queued URLs, in no particular order.
    pub fn queued(&self) -> impl Iterator<Item = &CanonicalUrl> {
        self.enqueued.iter()
    }
}

/// Serialized form: entries sorted by pop order, so snapshots are stable.
#[derive(Serialize, Deserialize)]
struct FrontierRepr {
    entries: Vec<Entry>,
    seen: BTreeSet<CanonicalUrl>,
    next_seq: u64,
}

impl Serialize for Frontier {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut entries: Vec<Entry> = self.heap.iter().cloned().collect();
        entries.sort_by(|a, b| b.cmp(a));
        FrontierRepr { entries, seen: self.seen.clone(), next_seq: self.next_seq }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Frontier {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FrontierRepr::deserialize(deserializer)?;
        let enqueued = repr.entries.iter().map(|e| e.url.clone()).collect();
        Ok(Frontier { heap: repr.entries.into_iter().collect(), seen: repr.seen, enqueued, next_seq: repr.next_seq })
    }
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopState {
    pub steps_taken: u64,
    pub budget: u64,
    pub frontier_empty: bool,
}

pub fn should_stop(stop: StopState) -> bool {
    stop.steps_taken >= stop.budget || stop.frontier_empty
}
