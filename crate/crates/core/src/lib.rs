//! Focused crawler engine: a UCB1 bandit chooses between forward-link,
//! backlink and keyword-search actions, pages are kept or dropped by cosine
//! similarity to a growing seed set, and a synthetic web makes every part of
//! the loop testable offline.

pub mod actions;
pub mod bandit;
pub mod canonical;
pub mod config;
pub mod engine;
pub mod fetcher;
pub mod frontier;
pub mod metrics;
pub mod model;
pub mod relevance;
pub mod sim;
