//! `threatcrawl`: run a live crawl, run against the synthetic web, summarize
//! an event log, or continue from a checkpoint.

mod http;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use threatcrawl_core::actions::{BacklinkClient, DensityExtractor, FixtureClient, SearchClient};
use threatcrawl_core::bandit::Policy;
use threatcrawl_core::config::{parse_config, ConfigError, CrawlConfig};
use threatcrawl_core::engine::{report_context, Engine, EngineError, EngineState, Services};
use threatcrawl_core::fetcher::SystemClock;
use threatcrawl_core::metrics::{self, build_report, read_events, EventWriter, MetricsError};
use threatcrawl_core::model::{Action, ActionSet};
use threatcrawl_core::relevance::{DeterministicHashProvider, EmbeddingProvider};
use threatcrawl_core::sim::{self, SimParams};

const EXIT_CONFIG: u8 = 2;
const EXIT_ENGINE: u8 = 3;
const EXIT_INTERRUPTED: u8 = 130;

#[derive(Parser)]
#[command(name = "threatcrawl", version, about = "Bandit-driven focused web crawler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl the live web from the seeds in a config file.
    Crawl {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Crawl a deterministic synthetic web with oracle services.
    Simulate {
        /// Named fixture; `standard` is the 400-page regression web.
        #[arg(long, conflicts_with = "params")]
        fixture: Option<String>,
        /// Generator parameters as inline JSON or a path to a JSON file.
        #[arg(long)]
        params: Option<String>,
        /// Seed of the web generator.
        #[arg(long, default_value_t = sim::STANDARD_WEB_SEED)]
        web_seed: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the report for an event log.
    Report {
        events: PathBuf,
        /// Checkpoint of the run; defaults to `checkpoint.json` next to the log.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Continue an interrupted run from its checkpoint.
    Resume {
        checkpoint: PathBuf,
        /// Override the step budget.
        #[arg(long)]
        steps: Option<u64>,
        /// Output directory; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        halt_after: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Arms to enable, e.g. `BFK`, `FK` or `K`.
    #[arg(long)]
    actions: Option<ActionSet>,
    /// Crawl-step budget.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// ucb1, eps or random.
    #[arg(long, default_value = "ucb1", value_parser = parse_policy)]
    policy: Policy,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Stop as if interrupted once this many crawl steps have run.
    #[arg(long, hide = true)]
    halt_after: Option<u64>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    Policy::parse(s).ok_or_else(|| format!("unknown policy `{s}` (expected ucb1, eps or random)"))
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Engine(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Engine(_) => EXIT_ENGINE,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(e) => e.into(),
            e => CliError::Engine(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Engine(e.to_string())
    }
}

/// How to rebuild the services of a run when resuming it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum RunSource {
    Crawl,
    Simulate { params: SimParams, web_seed: u64 },
}

#[derive(Serialize, Deserialize)]
struct SavedRun {
    source: RunSource,
    engine: EngineState,
}

enum Outcome {
    Completed,
    Interrupted,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Completed) => ExitCode::SUCCESS,
        Ok(Outcome::Interrupted) => ExitCode::from(EXIT_INTERRUPTED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Crawl { config, run } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = parse_config(&text)?;
            if let Some(fixture) = &cfg.adapters.fixture {
                let base = config.parent().unwrap_or(Path::new("."));
                cfg.adapters.fixture = Some(absolute(&base.join(fixture)).display().to_string());
            }
            apply_overrides(&mut cfg, &run);
            let services = live_services(&cfg)?;
            let engine = Engine::new(cfg, run.policy, services)?;
            execute(engine, RunSource::Crawl, &run.out, run.steps, run.halt_after)
        }
        Command::Simulate { fixture, params, web_seed, run } => {
            let params = match (fixture.as_deref(), params) {
                (_, Some(p)) => load_params(&p)?,
                (None | Some("standard"), None) => SimParams::standard(),
                (Some(other), None) => return Err(CliError::Config(format!("unknown fixture `{other}`"))),
            };
            let web = sim::generate_web(&params, web_seed).map_err(|e| CliError::Config(e.to_string()))?;
            let mut cfg = sim::standard_config(&web);
            apply_overrides(&mut cfg, &run);
            let engine = Engine::new(cfg.clone(), run.policy, sim::sim_services(&web, cfg.embedding_dimension))?;
            execute(engine, RunSource::Simulate { params, web_seed }, &run.out, run.steps, run.halt_after)
        }
        Command::Report { events, checkpoint, json } => {
            let checkpoint = checkpoint.unwrap_or_else(|| events.with_file_name("checkpoint.json"));
            let saved = load_checkpoint(&checkpoint)?;
            let log = read_events(&events).map_err(|e| CliError::Config(e.to_string()))?;
            let report = build_report(&log, &report_context(&saved.engine));
            print!("{}", if json { report.to_json() } else { report.to_table() });
            Ok(Outcome::Completed)
        }
        Command::Resume { checkpoint, steps, out, halt_after } => {
            let saved = load_checkpoint(&checkpoint)?;
            let out = out.unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf());
            let services = match &saved.source {
                RunSource::Crawl => live_services(&saved.engine.config)?,
                RunSource::Simulate { params, web_seed } => {
                    let web = sim::generate_web(params, *web_seed).map_err(|e| CliError::Config(e.to_string()))?;
                    sim::sim_services(&web, saved.engine.config.embedding_dimension)
                }
            };
            fs::create_dir_all(&out).map_err(|e| CliError::Engine(format!("cannot create {}: {e}", out.display())))?;
            let keep = saved.engine.events_logged as usize;
            let (writer, events) = EventWriter::resume(&out.join("events.jsonl"), keep)?;
            let engine = Engine::resume(saved.engine, services, events)?.with_event_log(writer);
            finish(engine, saved.source, &out, steps, halt_after)
        }
    }
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn apply_overrides(cfg: &mut CrawlConfig, run: &RunArgs) {
    if let Some(actions) = run.actions {
        cfg.actions_enabled = actions;
    }
    if let Some(seed) = run.rng_seed {
        cfg.rng_seed = seed;
    }
}

fn load_params(arg: &str) -> Result<SimParams, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Config(format!("cannot read {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad simulation parameters: {e}")))
}

fn load_checkpoint(path: &Path) -> Result<SavedRun, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    metrics::restore(&text).map_err(|e| CliError::Config(e.to_string()))
}

/// Services for a live crawl. Enabled backlink and keyword arms need a
/// configured service.
fn live_services(cfg: &CrawlConfig) -> Result<Services, CliError> {
    let adapters = &cfg.adapters;
    let fixture = match &adapters.fixture {
        Some(path) => Some(Arc::new(FixtureClient::from_path(Path::new(path)).map_err(|e| CliError::Config(e.to_string()))?)),
        None => None,
    };
    let backlinks: Option<Arc<dyn BacklinkClient>> = match (&adapters.backlink, &fixture) {
        (Some(a), _) => Some(Arc::new(http::HttpBacklinks::new(a))),
        (None, Some(f)) => Some(f.clone()),
        (None, None) => None,
    };
    let search: Option<Arc<dyn SearchClient>> = match (&adapters.search, &fixture) {
        (Some(a), _) => Some(Arc::new(http::HttpSearch::new(a))),
        (None, Some(f)) => Some(f.clone()),
        (None, None) => None,
    };
    if cfg.actions_enabled.contains(Action::Backlink) && backlinks.is_none() {
        return Err(CliError::Config("backlink search is enabled but no backlink adapter or fixture is configured".into()));
    }
    if cfg.actions_enabled.contains(Action::Keyword) && search.is_none() {
        return Err(CliError::Config("keyword search is enabled but no search adapter or fixture is configured".into()));
    }
    let provider: Arc<dyn EmbeddingProvider> = match &adapters.embedding {
        Some(a) => Arc::new(http::HttpEmbedding::new(a, cfg.embedding_dimension)),
        None => Arc::new(DeterministicHashProvider::new(cfg.embedding_dimension, 0)),
    };
    Ok(Services {
        transport: Arc::new(http::HttpTransport::new()),
        clock: Arc::new(SystemClock),
        backlinks,
        search,
        provider,
        extractor: Arc::new(DensityExtractor),
    })
}

fn execute(
    engine: Engine,
    source: RunSource,
    out: &Path,
    steps: Option<u64>,
    halt_after: Option<u64>,
) -> Result<Outcome, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Engine(format!("cannot create {}: {e}", out.display())))?;
    let writer = EventWriter::create(&out.join("events.jsonl"))?;
    finish(engine.with_event_log(writer), source, out, steps, halt_after)
}

/// Steps to completion or interruption, then writes the checkpoint and the
/// report.
fn finish(
    mut engine: Engine,
    source: RunSource,
    out: &Path,
    steps: Option<u64>,
    halt_after: Option<u64>,
) -> Result<Outcome, CliError> {
    if let Some(steps) = steps {
        engine.set_max_steps(steps);
    }
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    let result = step_loop(&mut engine, &stop, halt_after);
    if engine.is_started() {
        let saved = SavedRun { source, engine: engine.state() };
        write(&out.join("checkpoint.json"), &metrics::checkpoint(&saved))?;
        let report = engine.report();
        write(&out.join("report.json"), &report.to_json())?;
        print!("{}", report.to_table());
    }
    let outcome = result?;
    if let Outcome::Interrupted = outcome {
        eprintln!("interrupted after step {}; resume with `threatcrawl resume {}`", engine.crawl_steps(), out.join("checkpoint.json").display());
    }
    Ok(outcome)
}

fn step_loop(engine: &mut Engine, stop: &AtomicBool, halt_after: Option<u64>) -> Result<Outcome, CliError> {
    engine.start()?;
    loop {
        if stop.load(Ordering::SeqCst) || halt_after.is_some_and(|h| engine.crawl_steps() >= h) {
            return Ok(Outcome::Interrupted);
        }
        if !engine.step()? {
            return Ok(Outcome::Completed);
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Engine(format!("cannot write {}: {e}", path.display())))
}
