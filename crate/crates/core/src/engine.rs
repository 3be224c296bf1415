//! The crawl loop.
//!
//! Seeds are fetched, embedded and queued at the sentinel priority; every
//! enabled arm is pulled once on the seeds (discovery); then each step pops
//! the most similar queued page, lets the policy choose an arm, executes it,
//! rewards the arm, and queues the relevant pages it found. Pages at or above
//! the seed threshold join the seed set after their step.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{
    execute_action, forward_links, ActionContext, BacklinkClient, ContentExtractor,
    CrawlRegistry, SearchClient,
};
use crate::bandit::{discovery_schedule, normalized_reward, raw_reward, BanditError, BanditState, Policy, PullResult};
use crate::canonical::{domain_of, CanonicalUrl};
use crate::config::{ConfigError, CrawlConfig};
use crate::fetcher::{Blacklist, Clock, FetchPolicy, Fetcher, FetcherSnapshot, Transport};
use crate::frontier::{should_stop, Frontier, FrontierError, StopState, SEED_PRIORITY};
use crate::metrics::{
    build_report, ConfigEcho, CrawlEvent, EventWriter, MetricsError, Phase, ReportContext, RetrievedPage, RunReport,
};
use crate::model::{Action, DiscoveredBy, Label, PageRecord};
use crate::relevance::{embed_document, EmbeddingProvider, SeedSet};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("none of the seed pages could be fetched and embedded")]
    NoSeeds,
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Frontier(#[from] FrontierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("checkpoint was written with embedding provider `{expected}`, got `{found}`")]
    ProviderMismatch { expected: String, found: String },
}

/// External collaborators of a run.
#[derive(Clone)]
pub struct Services {
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub backlinks: Option<Arc<dyn BacklinkClient>>,
    pub search: Option<Arc<dyn SearchClient>>,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub extractor: Arc<dyn ContentExtractor>,
}

/// Everything needed to continue a run from a step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub config: CrawlConfig,
    pub policy: Policy,
    pub embedding: String,
    /// User seeds that were fetched and embedded, in config order.
    pub seed_pages: Vec<CanonicalUrl>,
    pub seeds: SeedSet,
    pub frontier: Frontier,
    /// Text and links of queued pages, keyed by URL.
    pub pending: BTreeMap<CanonicalUrl, PageRecord>,
    pub bandit: Option<BanditState>,
    pub registry: CrawlRegistry,
    pub crawl_steps: u64,
    pub events_logged: u64,
    pub clock_ms: u64,
    pub fetcher: FetcherSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Interrupted,
}

pub struct Engine {
    services: Services,
    fetcher: Fetcher,
    state: EngineState,
    events: Vec<CrawlEvent>,
    log: Option<EventWriter>,
}

impl Engine {
    pub fn new(config: CrawlConfig, policy: Policy, services: Services) -> Result<Engine, EngineError> {
        config.validate()?;
        let state = EngineState {
            embedding: services.provider.identity(),
            seed_pages: Vec::new(),
            seeds: SeedSet::new(),
            frontier: Frontier::new(),
            pending: BTreeMap::new(),
            bandit: None,
            registry: CrawlRegistry::default(),
            crawl_steps: 0,
            events_logged: 0,
            clock_ms: services.clock.now_ms(),
            fetcher: FetcherSnapshot::default(),
            config,
            policy,
        };
        Ok(Engine { fetcher: make_fetcher(&state.config, &services), services, state, events: Vec::new(), log: None })
    }

    /// Continues from a checkpointed state; `events` are the events logged
    /// before the checkpoint.
    pub fn resume(state: EngineState, services: Services, events: Vec<CrawlEvent>) -> Result<Engine, EngineError> {
        state.config.validate()?;
        let found = services.provider.identity();
        if found != state.embedding {
            return Err(EngineError::ProviderMismatch { expected: state.embedding.clone(), found });
        }
        if events.len() as u64 != state.events_logged {
            return Err(MetricsError::CorruptCheckpoint(format!(
                "checkpoint covers {} events, log has {}",
                state.events_logged,
                events.len()
            ))
            .into());
        }
        services.clock.restore(state.clock_ms);
        let fetcher = make_fetcher(&state.config, &services);
        fetcher.restore(state.fetcher.clone());
        Ok(Engine { fetcher, services, state, events, log: None })
    }

    /// Mirrors every new event into `writer`.
    pub fn with_event_log(mut self, writer: EventWriter) -> Engine {
        self.log = Some(writer);
        self
    }

    /// Overrides the step budget, e.g. from a command-line flag.
    pub fn set_max_steps(&mut self, steps: u64) {
        self.state.config.max_steps = steps;
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.state.config
    }

    pub fn events(&self) -> &[CrawlEvent] {
        &self.events
    }

    pub fn crawl_steps(&self) -> u64 {
        self.state.crawl_steps
    }

    pub fn seeds(&self) -> &SeedSet {
        &self.state.seeds
    }

    pub fn bandit(&self) -> Option<&BanditState> {
        self.state.bandit.as_ref()
    }

    /// Snapshot of the run at the current step boundary.
    pub fn state(&self) -> EngineState {
        let mut s = self.state.clone();
        s.events_logged = self.events.len() as u64;
        s.clock_ms = self.services.clock.now_ms();
        s.fetcher = self.fetcher.snapshot();
        s
    }

    pub fn checkpoint(&self) -> String {
        crate::metrics::checkpoint(&self.state())
    }

    pub fn report_context(&self) -> ReportContext {
        report_context(&self.state)
    }

    pub fn report(&self) -> RunReport {
        build_report(&self.events, &self.report_context())
    }

    pub fn is_started(&self) -> bool {
        self.state.bandit.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.is_started()
            && should_stop(StopState {
                steps_taken: self.state.crawl_steps,
                budget: self.state.config.max_steps,
                frontier_empty: self.state.frontier.is_empty(),
            })
    }

    /// Loads the seeds and runs the discovery phase. No-op once started.
    pub fn start(&mut self) -> Result<(), EngineError> {
        if self.is_started() {
            return Ok(());
        }
        self.load_seeds()?;
        let actions = self.state.config.actions_enabled;
        let mut bandit = BanditState::new(actions, self.state.config.rng_seed);
        for (action, idx) in discovery_schedule(self.state.seed_pages.len(), actions) {
            let subject = self.state.pending[&self.state.seed_pages[idx]].clone();
            let (result, reward) = self.pull(Phase::Discovery, action, &subject)?;
            bandit.update(action, reward, &result)?;
        }
        self.state.bandit = Some(bandit);
        Ok(())
    }

    fn load_seeds(&mut self) -> Result<(), EngineError> {
        for url in self.state.config.seeds.clone() {
            if !self.state.registry.mark(&url) {
                continue;
            }
            let fetched = match self.fetcher.fetch(&url) {
                Ok(f) if f.is_success() => f,
                Ok(f) => {
                    log::warn!("seed {url}: status {}", f.status);
                    continue;
                }
                Err(e) => {
                    log::warn!("seed {url}: {e}");
                    continue;
                }
            };
            if fetched.url != url && !self.state.registry.mark(&fetched.url) {
                continue;
            }
            let html = fetched.text();
            let text = self.services.extractor.extract(&html).unwrap_or_default();
            let embedding = match embed_document(&text, self.services.provider.as_ref()) {
                Ok(e) => e,
                Err(e) => {
                    log::warn!("seed {url}: {e}");
                    continue;
                }
            };
            let page = PageRecord {
                url: fetched.url.clone(),
                out_links: forward_links(&html, &fetched.url),
                text,
                embedding: None,
                similarity: None,
                label: Label::SeedCandidate,
                discovered_by: DiscoveredBy::Seed,
                step: 0,
            };
            self.state.registry.add_domain(domain_of(&page.url));
            self.state.seeds.push(page.url.clone(), embedding);
            self.state.frontier.push(page.url.clone(), SEED_PRIORITY)?;
            self.state.seed_pages.push(page.url.clone());
            self.state.pending.insert(page.url.clone(), page);
        }
        if self.state.seed_pages.is_empty() {
            return Err(EngineError::NoSeeds);
        }
        Ok(())
    }

    /// One crawl step. Returns false once a stop condition holds.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        self.start()?;
        if self.is_finished() {
            return Ok(false);
        }
        let (url, _) = self.state.frontier.pop_max().expect("frontier checked nonempty");
        let subject = self.state.pending.remove(&url).expect("every queued page has a pending record");
        let bandit = self.state.bandit.as_mut().expect("started");
        let action = bandit.select(self.state.policy)?;
        let (result, reward) = self.pull(Phase::Crawl, action, &subject)?;
        self.state.bandit.as_mut().expect("started").update(action, reward, &result)?;
        self.state.crawl_steps += 1;
        Ok(true)
    }

    /// Steps until a stop condition holds or `stop` is raised; a raised flag
    /// takes effect at the next step boundary.
    pub fn run(&mut self, stop: &AtomicBool) -> Result<RunStatus, EngineError> {
        self.start()?;
        loop {
            if stop.load(Ordering::SeqCst) {
                return Ok(RunStatus::Interrupted);
            }
            if !self.step()? {
                return Ok(RunStatus::Completed);
            }
        }
    }

    fn pull(&mut self, phase: Phase, action: Action, subject: &PageRecord) -> Result<(PullResult, f64), EngineError> {
        let step = self.events.len() as u64 + 1;
        let ctx = ActionContext {
            fetcher: &self.fetcher,
            backlinks: self.services.backlinks.as_deref(),
            search: self.services.search.as_deref(),
            provider: self.services.provider.as_ref(),
            extractor: self.services.extractor.as_ref(),
            seeds: &self.state.seeds,
            config: &self.state.config,
        };
        let result = execute_action(action, subject, &ctx, &mut self.state.registry, step);
        let delta = self.state.config.domain_weight;
        let (raw, reward) = if result.failed {
            (0.0, 0.0)
        } else {
            let raw = raw_reward(&result, delta);
            (raw, normalized_reward(raw, result.retrieved.len(), delta))
        };

        for page in &result.retrieved {
            if !page.label.is_relevant() {
                continue;
            }
            let similarity = page.similarity.expect("relevant pages have a similarity");
            if self.state.frontier.push(page.url.clone(), similarity)? {
                self.state.pending.insert(page.url.clone(), PageRecord { embedding: None, ..page.clone() });
            }
            if page.label == Label::SeedCandidate {
                if let Some(e) = &page.embedding {
                    self.state.seeds.push(page.url.clone(), e.clone());
                }
            }
        }

        let event = CrawlEvent {
            step,
            phase,
            action,
            url: subject.url.clone(),
            similarity: subject.similarity,
            label: (subject.discovered_by != DiscoveredBy::Seed).then_some(subject.label),
            reward_raw: raw,
            reward_normalized: reward,
            new_domains: result.new_domains.iter().cloned().collect(),
            retrieved: result
                .retrieved
                .iter()
                .map(|p| RetrievedPage {
                    url: p.url.clone(),
                    domain: domain_of(&p.url),
                    similarity: p.similarity,
                    label: p.label,
                })
                .collect(),
            failed: result.failed,
            timestamp: self.services.clock.now_ms(),
        };
        log::info!(
            "step {step} {action} {} -> {} pages, {} relevant, reward {reward:.3}",
            subject.url,
            event.retrieved.len(),
            result.relevant_count()
        );
        if let Some(log) = self.log.as_mut() {
            log.append(&event)?;
        }
        self.events.push(event);
        Ok((result, reward))
    }
}

fn make_fetcher(config: &CrawlConfig, services: &Services) -> Fetcher {
    Fetcher::new(
        services.transport.clone(),
        services.clock.clone(),
        FetchPolicy::from_config(config),
        Blacklist::from_config(config),
    )
}

pub fn report_context(state: &EngineState) -> ReportContext {
    let cfg = &state.config;
    ReportContext {
        seed_pages: state.seed_pages.clone(),
        config: ConfigEcho {
            seeds: cfg.seeds.len(),
            actions: cfg.actions_enabled,
            relevance_threshold: cfg.relevance_threshold,
            seed_threshold: cfg.seed_threshold,
            max_steps: cfg.max_steps,
            domain_weight: cfg.domain_weight,
            rng_seed: cfg.rng_seed,
            policy: state.policy.name().to_string(),
            embedding: state.embedding.clone(),
        },
    }
}
