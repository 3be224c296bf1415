//! Shared domain values: search actions, relevance labels and page records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canonical::CanonicalUrl;
use crate::relevance::Embedding;

/// One arm of the bandit: a way of retrieving new pages from a subject page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    /// Follow every link on the page.
    #[serde(rename = "F")]
    Forward,
    /// Ask a backlink index for pages linking to the page.
    #[serde(rename = "B")]
    Backlink,
    /// Query a search service with the page's top keywords.
    #[serde(rename = "K")]
    Keyword,
}

impl Action {
    /// Canonical arm order; also the tie-break order for arm selection.
    pub const ALL: [Action; 3] = [Action::Forward, Action::Backlink, Action::Keyword];

    pub fn letter(self) -> char {
        match self {
            Action::Forward => 'F',
            Action::Backlink => 'B',
            Action::Keyword => 'K',
        }
    }

    pub fn from_letter(c: char) -> Option<Action> {
        match c.to_ascii_uppercase() {
            'F' => Some(Action::Forward),
            'B' => Some(Action::Backlink),
            'K' => Some(Action::Keyword),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionSetError {
    #[error("unknown action `{0}` (expected F, B or K)")]
    Unknown(char),
    #[error("action set is empty")]
    Empty,
}

/// Nonempty set of enabled actions, always iterated in F, B, K order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionSet {
    mask: u8,
}

impl ActionSet {
    pub fn all() -> ActionSet {
        ActionSet { mask: 0b111 }
    }

    pub fn from_actions<I: IntoIterator<Item = Action>>(actions: I) -> Result<ActionSet, ActionSetError> {
        let mask = actions.into_iter().fold(0u8, |m, a| m | bit(a));
        if mask == 0 {
            return Err(ActionSetError::Empty);
        }
        Ok(ActionSet { mask })
    }

    pub fn contains(&self, action: Action) -> bool {
        self.mask & bit(action) != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        Action::ALL.into_iter().filter(|a| self.contains(*a))
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Letters in the order the evaluation variants are named: B, F, K.
    pub fn variant_name(&self) -> String {
        [Action::Backlink, Action::Forward, Action::Keyword]
            .into_iter()
            .filter(|a| self.contains(*a))
            .map(Action::letter)
            .collect()
    }
}

fn bit(action: Action) -> u8 {
    match action {
        Action::Forward => 0b001,
        Action::Backlink => 0b010,
        Action::Keyword => 0b100,
    }
}

impl FromStr for ActionSet {
    type Err = ActionSetError;

    /// Parses letter strings such as `BFK`, `fk` or `K`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let actions = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| Action::from_letter(c).ok_or(ActionSetError::Unknown(c)))
            .collect::<Result<Vec<_>, _>>()?;
        ActionSet::from_actions(actions)
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.iter() {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

impl Serialize for ActionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ActionSet {
    /// Accepts either `["F","K"]` or `"FK"`.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Letters(String),
            List(Vec<Action>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Letters(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::List(list) => ActionSet::from_actions(list).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Irrelevant,
    Relevant,
    SeedCandidate,
}

impl Label {
    /// Counts toward `p ~ S`: relevant pages and promoted seeds alike.
    pub fn is_relevant(self) -> bool {
        matches!(self, Label::Relevant | Label::SeedCandidate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscoveredBy {
    Seed,
    #[serde(rename = "F")]
    Forward,
    #[serde(rename = "B")]
    Backlink,
    #[serde(rename = "K")]
    Keyword,
}

impl From<Action> for DiscoveredBy {
    fn from(action: Action) -> Self {
        match action {
            Action::Forward => DiscoveredBy::Forward,
            Action::Backlink => DiscoveredBy::Backlink,
            Action::Keyword => DiscoveredBy::Keyword,
        }
    }
}

/// A fetched and classified page.
///
/// `out_links` holds the forward links extracted from the full document so a
/// later forward pull on this page needs no refetch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub url: CanonicalUrl,
    pub text: String,
    pub embedding: Option<Embedding>,
    pub similarity: Option<f64>,
    pub label: Label,
    pub discovered_by: DiscoveredBy,
    pub step: u64,
    #[serde(default)]
    pub out_links: Vec<CanonicalUrl>,
}
