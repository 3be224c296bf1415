//! Arm selection over the enabled search actions.
//!
//! UCB1 picks the arm maximizing `mean + sqrt(2 ln t / n_i)`. Rewards fed to
//! it are the raw pull reward (`δ·|new domains| + |relevant pages|`) scaled
//! into [0, 1] by `max(1, retrieved)·(1 + δ)`. Uniform-random and ε-greedy
//! policies share the same state for baseline comparisons.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canonical::{CanonicalUrl, Domain};
use crate::model::{Action, ActionSet, PageRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("arm {0} has not been pulled; run the discovery phase first")]
    NotInitialized(Action),
    #[error("reward {0} is outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("action {0} is not an enabled arm")]
    UnknownArm(Action),
}

/// Outcome of executing one action on one subject page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullResult {
    pub source_page: CanonicalUrl,
    pub action: Action,
    /// Pages fetched and classified for the first time during this pull.
    pub retrieved: Vec<PageRecord>,
    /// Domains of `retrieved` not seen anywhere before this pull.
    pub new_domains: BTreeSet<Domain>,
    /// The backing client failed; the pull still counts, with reward 0.
    pub failed: bool,
}

impl PullResult {
    pub fn failed(source_page: CanonicalUrl, action: Action) -> PullResult {
        PullResult { source_page, action, retrieved: Vec::new(), new_domains: BTreeSet::new(), failed: true }
    }

    pub fn relevant_count(&self) -> usize {
        self.retrieved.iter().filter(|p| p.label.is_relevant()).count()
    }
}

/// `max(δ·|new_domains| + Σ [p' ~ S], 0)`
pub fn raw_reward(result: &PullResult, domain_weight: f64) -> f64 {
    let score = domain_weight * result.new_domains.len() as f64 + result.relevant_count() as f64;
    score.max(0.0)
}

/// Scales a raw reward into [0, 1].
///
/// Both terms of the raw reward are bounded by the retrieved count, so the
/// divisor is tight; a final `min(1)` absorbs floating-point overshoot.
pub fn normalized_reward(raw: f64, retrieved_count: usize, domain_weight: f64) -> f64 {
    let denom = retrieved_count.max(1) as f64 * (1.0 + domain_weight);
    (raw / denom).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub action: Action,
    pub pulls: u64,
    pub mean_reward: f64,
    /// Sum of similarities of retrieved pages that have one.
    pub cumulative_similarity: f64,
    /// Number of retrieved pages contributing to `cumulative_similarity`.
    pub pages_retrieved: u64,
}

impl ArmStats {
    fn new(action: Action) -> ArmStats {
        ArmStats { action, pulls: 0, mean_reward: 0.0, cumulative_similarity: 0.0, pages_retrieved: 0 }
    }

    pub fn avg_similarity(&self) -> f64 {
        if self.pages_retrieved == 0 {
            0.0
        } else {
            self.cumulative_similarity / self.pages_retrieved as f64
        }
    }

    pub fn ucb_index(&self, total_pulls: u64) -> f64 {
        self.mean_reward + (2.0 * (total_pulls as f64).ln() / self.pulls as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Ucb1,
    EpsilonGreedy { epsilon: f64 },
    Random,
}

impl Policy {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn parse(name: &str) -> Option<Policy> {
        match name.to_ascii_lowercase().as_str() {
            "ucb1" | "ucb" => Some(Policy::Ucb1),
            "eps" | "epsilon" | "epsilon-greedy" => Some(Policy::EpsilonGreedy { epsilon: Self::DEFAULT_EPSILON }),
            "random" => Some(Policy::Random),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Ucb1 => "ucb1",
            Policy::EpsilonGreedy { .. } => "eps",
            Policy::Random => "random",
        }
    }
}

/// Seeded ChaCha stream whose position survives serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRng(ChaCha8Rng);

impl PolicyRng {
    pub fn seeded(seed: u64) -> PolicyRng {
        PolicyRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

#[derive(Serialize, Deserialize)]
struct RngRepr {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl Serialize for PolicyRng {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RngRepr {
            seed: hex::encode(self.0.get_seed()),
            stream: self.0.get_stream(),
            word_pos: self.0.get_word_pos().to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolicyRng {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = RngRepr::deserialize(deserializer)?;
        let bytes = hex::decode(&repr.seed).map_err(D::Error::custom)?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| D::Error::custom("rng seed must be 32 bytes"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(repr.stream);
        rng.set_word_pos(repr.word_pos.parse().map_err(D::Error::custom)?);
        Ok(PolicyRng(rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    arms: Vec<ArmStats>,
    total_pulls: u64,
    rng: PolicyRng,
}

impl BanditState {
    pub fn new(actions: ActionSet, rng_seed: u64) -> BanditState {
        BanditState { arms: actions.iter().map(ArmStats::new).collect(), total_pulls: 0, rng: PolicyRng::seeded(rng_seed) }
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn arm(&self, action: Action) -> Option<&ArmStats> {
        self.arms.iter().find(|a| a.action == action)
    }

    pub fn total_pulls(&self) -> u64 {
        self.total_pulls
    }

    /// UCB1 choice; ties resolve to the earliest arm in F, B, K order.
    pub fn select_ucb1(&self) -> Result<Action, BanditError> {
        if let Some(cold) = self.arms.iter().find(|a| a.pulls == 0) {
            return Err(BanditError::NotInitialized(cold.action));
        }
        let mut best = &self.arms[0];
        let mut best_index = best.ucb_index(self.total_pulls);
        for arm in &self.arms[1..] {
            let index = arm.ucb_index(self.total_pulls);
            if index > best_index {
                best = arm;
                best_index = index;
            }
        }
        Ok(best.action)
    }

    pub fn select(&mut self, policy: Policy) -> Result<Action, BanditError> {
        match policy {
            Policy::Ucb1 => self.select_ucb1(),
            Policy::Random => Ok(self.random_arm()),
            Policy::EpsilonGreedy { epsilon } => {
                if self.rng.inner().gen::<f64>() < epsilon {
                    Ok(self.random_arm())
                } else {
                    Ok(self.greedy_arm())
                }
            }
        }
    }

    fn random_arm(&mut self) -> Action {
        let i = self.rng.inner().gen_range(0..self.arms.len());
        self.arms[i].action
    }

    fn greedy_arm(&self) -> Action {
        let mut best = &self.arms[0];
        for arm in &self.arms[1..] {
            if arm.mean_reward > best.mean_reward {
                best = arm;
            }
        }
        best.action
    }

    /// Records a reward and accumulates the similarity statistics of `result`.
    pub fn update(&mut self, action: Action, reward: f64, result: &PullResult) -> Result<(), BanditError> {
        let (sum, count) = result
            .retrieved
            .iter()
            .filter_map(|p| p.similarity)
            .fold((0.0, 0u64), |(s, c), sim| (s + sim, c + 1));
        self.record(action, reward, sum, count)
    }

    /// Reward update without page bookkeeping.
    pub fn record(&mut self, action: Action, reward: f64, similarity_sum: f64, pages: u64) -> Result<(), BanditError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(BanditError::RewardOutOfRange(reward));
        }
        let arm = self.arms.iter_mut().find(|a| a.action == action).ok_or(BanditError::UnknownArm(action))?;
        arm.pulls += 1;
        arm.mean_reward += (reward - arm.mean_reward) / arm.pulls as f64;
        arm.cumulative_similarity += similarity_sum;
        arm.pages_retrieved += pages;
        self.total_pulls += 1;
        Ok(())
    }
}

/// Round-robin assignment of enabled actions to seeds: the i-th enabled
/// action runs on seed `i mod |seeds|`.
pub fn discovery_schedule(seed_count: usize, actions: ActionSet) -> Vec<(Action, usize)> {
    assert!(seed_count > 0, "discovery needs at least one seed");
    actions.iter().enumerate().map(|(i, a)| (a, i % seed_count)).collect()
}

/// Pulls every enabled arm once. A pull whose executor fails records reward
/// 0 and still counts.
pub fn init_discovery<F, E>(
    seeds: &[CanonicalUrl],
    actions: ActionSet,
    rng_seed: u64,
    domain_weight: f64,
    mut execute: F,
) -> Result<BanditState, BanditError>
where
    F: FnMut(Action, &CanonicalUrl) -> Result<PullResult, E>,
{
    let mut state = BanditState::new(actions, rng_seed);
    for (action, seed_idx) in discovery_schedule(seeds.len(), actions) {
        let seed = &seeds[seed_idx];
        let result = execute(action, seed).unwrap_or_else(|_| PullResult::failed(seed.clone(), action));
        let reward = if result.failed {
            0.0
        } else {
            normalized_reward(raw_reward(&result, domain_weight), result.retrieved.len(), domain_weight)
        };
        state.update(action, reward, &result)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscoveredBy, Label};

    fn url(s: &str) -> CanonicalUrl {
        s.parse().unwrap()
    }

    fn page(i: usize, label: Label, sim: f64) -> PageRecord {
        PageRecord {
            url: url(&format!("http://p{i}.example/")),
            text: String::new(),
            embedding: None,
            similarity: Some(sim),
            label,
            discovered_by: DiscoveredBy::Forward,
            step: 1,
            out_links: vec![],
        }
    }

    fn pull(relevant: usize, total: usize, new_domains: usize) -> PullResult {
        PullResult {
            source_page: url("http://src.example/"),
            action: Action::Forward,
            retrieved: (0..total)
                .map(|i| if i < relevant { page(i, Label::Relevant, 0.7) } else { page(i, Label::Irrelevant, 0.1) })
                .collect(),
            new_domains: (0..new_domains).map(|i| Domain::new(&format!("d{i}.example")).unwrap()).collect(),
            failed: false,
        }
    }

    fn state_with(arms: &[(Action, u64, f64)]) -> BanditState {
        let set = ActionSet::from_actions(arms.iter().map(|a| a.0)).unwrap();
        let mut s = BanditState::new(set, 0);
        for arm in &mut s.arms {
            let (_, n, mean) = arms.iter().find(|a| a.0 == arm.action).unwrap();
            arm.pulls = *n;
            arm.mean_reward = *mean;
        }
        s.total_pulls = arms.iter().map(|a| a.1).sum();
        s
    }

    #[test]
    fn raw_reward_examples() {
        assert_eq!(raw_reward(&pull(0, 0, 0), 1.0), 0.0);
        assert_eq!(raw_reward(&pull(3, 10, 2), 1.0), 5.0);
        assert_eq!(raw_reward(&pull(0, 4, 4), 0.5), 2.0);
        let mut seedy = pull(1, 2, 0);
        seedy.retrieved[1].label = Label::SeedCandidate;
        assert_eq!(raw_reward(&seedy, 1.0), 2.0);
    }

    #[test]
    fn normalized_reward_examples() {
        assert_eq!(normalized_reward(0.0, 0, 1.0), 0.0);
        assert_eq!(normalized_reward(5.0, 10, 1.0), 0.25);
        let all = pull(7, 7, 7);
        assert_eq!(normalized_reward(raw_reward(&all, 1.0), 7, 1.0), 1.0);
    }

    #[test]
    fn ucb1_selection_examples() {
        use Action::*;
        let s = state_with(&[(Forward, 1, 0.9), (Backlink, 1, 0.1), (Keyword, 1, 0.1)]);
        assert_eq!(s.select_ucb1().unwrap(), Forward);
        let s = state_with(&[(Forward, 10, 0.5), (Backlink, 2, 0.5), (Keyword, 10, 0.5)]);
        assert_eq!(s.select_ucb1().unwrap(), Backlink);
        let s = state_with(&[(Forward, 20, 0.6), (Backlink, 5, 0.4)]);
        let f = s.arm(Forward).unwrap().ucb_index(25);
        let b = s.arm(Backlink).unwrap().ucb_index(25);
        let oracle = |mean: f64, n: f64| mean + (2.0 * 25f64.ln() / n).sqrt();
        assert!((f - oracle(0.6, 20.0)).abs() < 1e-12, "{f}");
        assert!((b - oracle(0.4, 5.0)).abs() < 1e-12, "{b}");
        assert!((f - 1.1674).abs() < 1e-4 && (b - 1.5347).abs() < 1e-4);
        assert_eq!(s.select_ucb1().unwrap(), Backlink);
    }

    #[test]
    fn ucb1_ties_follow_arm_order() {
        use Action::*;
        let s = state_with(&[(Forward, 4, 0.3), (Backlink, 4, 0.3), (Keyword, 4, 0.3)]);
        assert_eq!(s.select_ucb1().unwrap(), Forward);
        let s = state_with(&[(Backlink, 4, 0.3), (Keyword, 4, 0.3)]);
        assert_eq!(s.select_ucb1().unwrap(), Backlink);
    }

    #[test]
    fn selection_requires_discovery() {
        let s = BanditState::new(ActionSet::all(), 0);
        assert_eq!(s.select_ucb1(), Err(BanditError::NotInitialized(Action::Forward)));
    }

    #[test]
    fn running_mean_updates() {
        let mut s = BanditState::new("F".parse().unwrap(), 0);
        s.record(Action::Forward, 0.4, 0.0, 0).unwrap();
        assert_eq!(s.arm(Action::Forward).unwrap().mean_reward, 0.4);
        s.record(Action::Forward, 0.8, 0.0, 0).unwrap();
        assert!((s.arm(Action::Forward).unwrap().mean_reward - 0.6).abs() < 1e-15);
        assert_eq!(s.record(Action::Forward, 1.5, 0.0, 0), Err(BanditError::RewardOutOfRange(1.5)));
        assert!(s.record(Action::Forward, f64::NAN, 0.0, 0).is_err());
        assert_eq!(s.record(Action::Keyword, 0.5, 0.0, 0), Err(BanditError::UnknownArm(Action::Keyword)));
        assert_eq!(s.total_pulls(), 2);
    }

    #[test]
    fn update_accumulates_similarity() {
        let mut s = BanditState::new(ActionSet::all(), 0);
        s.update(Action::Backlink, 0.5, &pull(1, 2, 0)).unwrap();
        let arm = s.arm(Action::Backlink).unwrap();
        assert_eq!(arm.pages_retrieved, 2);
        assert!((arm.avg_similarity() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn discovery_round_robin() {
        let seeds: Vec<CanonicalUrl> = (0..17).map(|i| url(&format!("http://s{i}.example/"))).collect();
        let mut calls = Vec::new();
        let s = init_discovery(&seeds, ActionSet::all(), 1, 1.0, |a, seed| {
            calls.push((a, seed.clone()));
            Ok::<_, ()>(pull(1, 2, 1))
        })
        .unwrap();
        assert_eq!(s.total_pulls(), 3);
        assert_eq!(
            calls,
            vec![(Action::Forward, seeds[0].clone()), (Action::Backlink, seeds[1].clone()), (Action::Keyword, seeds[2].clone())]
        );
        assert!(s.select_ucb1().is_ok());

        let one = init_discovery(&seeds, "K".parse().unwrap(), 1, 1.0, |_, _| Ok::<_, ()>(pull(0, 0, 0))).unwrap();
        assert_eq!(one.total_pulls(), 1);
        assert_eq!(discovery_schedule(2, ActionSet::all()), vec![(Action::Forward, 0), (Action::Backlink, 1), (Action::Keyword, 0)]);
    }

    #[test]
    fn failed_discovery_pull_scores_zero() {
        let seeds = vec![url("http://s.example/")];
        let s = init_discovery(&seeds, ActionSet::all(), 1, 1.0, |a, _| {
            if a == Action::Backlink {
                Err("backlink service down")
            } else {
                Ok(pull(2, 2, 2))
            }
        })
        .unwrap();
        let b = s.arm(Action::Backlink).unwrap();
        assert_eq!((b.pulls, b.mean_reward), (1, 0.0));
        assert_eq!(s.arm(Action::Forward).unwrap().mean_reward, 1.0);
    }

    #[test]
    fn rng_state_survives_serde() {
        let mut s = BanditState::new(ActionSet::all(), 99);
        for _ in 0..5 {
            s.select(Policy::Random).unwrap();
        }
        let json = serde_json::to_string(&s).unwrap();
        let mut back: BanditState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let a: Vec<_> = (0..20).map(|_| s.select(Policy::Random).unwrap()).collect();
        let b: Vec<_> = (0..20).map(|_| back.select(Policy::Random).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_policies_stay_within_enabled_arms() {
        let mut s = BanditState::new("BK".parse().unwrap(), 5);
        s.record(Action::Backlink, 0.2, 0.0, 0).unwrap();
        s.record(Action::Keyword, 0.9, 0.0, 0).unwrap();
        for policy in [Policy::Random, Policy::EpsilonGreedy { epsilon: 0.1 }, Policy::Ucb1] {
            for _ in 0..200 {
                assert_ne!(s.select(policy).unwrap(), Action::Forward);
            }
        }
        assert_eq!(s.select(Policy::EpsilonGreedy { epsilon: 0.0 }).unwrap(), Action::Keyword);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn running_mean_matches_batch_mean(rewards in prop::collection::vec(0.0f64..=1.0, 1..500)) {
                let mut s = BanditState::new("F".parse().unwrap(), 0);
                for r in &rewards {
                    s.record(Action::Forward, *r, 0.0, 0).unwrap();
                }
                let batch = rewards.iter().sum::<f64>() / rewards.len() as f64;
                let mean = s.arm(Action::Forward).unwrap().mean_reward;
                prop_assert!((mean - batch).abs() <= 1e-9 * batch.max(1e-12) + 1e-15);
            }

            #[test]
            fn normalized_reward_in_unit_interval(total in 0usize..50, rel in 0usize..50, dom in 0usize..50, delta in 0.0f64..5.0) {
                let rel = rel.min(total);
                let dom = dom.min(total);
                let p = pull(rel, total, dom);
                let r = normalized_reward(raw_reward(&p, delta), total, delta);
                prop_assert!((0.0..=1.0).contains(&r));
            }

            #[test]
            fn equal_arms_pick_first(mean in 0.0f64..=1.0, n in 1u64..1000) {
                use Action::*;
                let s = state_with(&[(Forward, n, mean), (Backlink, n, mean), (Keyword, n, mean)]);
                prop_assert_eq!(s.select_ucb1().unwrap(), Forward);
            }
        }
    }
}
