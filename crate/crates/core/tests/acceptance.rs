//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::{BTreeSet, HashSet};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use threatcrawl_core::bandit::{normalized_reward, raw_reward, BanditState, Policy, PullResult};
use threatcrawl_core::canonical::{CanonicalUrl, Domain};
use threatcrawl_core::engine::{Engine, EngineState, Services};
use threatcrawl_core::fetcher::{RawResponse, Transport, TransportError};
use threatcrawl_core::frontier::Frontier;
use threatcrawl_core::metrics::{self, events_to_jsonl, harvest_rate, EventWriter};
use threatcrawl_core::model::{Action, ActionSet, DiscoveredBy, Label, PageRecord};
use threatcrawl_core::relevance::{
    cosine_similarity, label_for, similarity_to_set, Embedding, SeedSet, Thresholds,
};
use threatcrawl_core::sim::{self, SimParams, SimTransport, PRIVATE_PREFIX};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn url(i: usize) -> CanonicalUrl {
    format!("http://host{}.example/page{i}", i % 97).parse().unwrap()
}

fn harvest_rate_formula() -> Outcome {
    for (relevant, total, expected) in [(387, 6199, 6.24), (2055, 8175, 25.14)] {
        let hr = harvest_rate(relevant, total).map_err(|e| e.to_string())?;
        check((hr - expected).abs() <= 0.01, || format!("harvest_rate({relevant}, {total}) = {hr}, expected {expected}"))?;
    }
    Ok("6.24 and 25.14 reproduced".into())
}

fn ucb1_bernoulli() -> Outcome {
    let start = Instant::now();
    let probs = |a: Action| match a {
        Action::Forward => 0.2,
        Action::Backlink => 0.5,
        Action::Keyword => 0.8,
    };
    let mut bandit = BanditState::new(ActionSet::all(), 7);
    let mut env = ChaCha8Rng::seed_from_u64(2024);
    let (mut regret, mut regret_1000, mut best_pulls) = (0.0, 0.0, 0u64);
    let mut pull = |bandit: &mut BanditState, action: Action| -> Result<f64, String> {
        let p = probs(action);
        let reward = if env.gen::<f64>() < p { 1.0 } else { 0.0 };
        bandit.record(action, reward, 0.0, 0).map_err(|e| e.to_string())?;
        Ok(0.8 - p)
    };
    for action in ActionSet::all().iter() {
        regret += pull(&mut bandit, action)?;
    }
    for t in ActionSet::all().len() + 1..=10_000 {
        let action = bandit.select(Policy::Ucb1).map_err(|e| e.to_string())?;
        best_pulls += (action == Action::Keyword) as u64;
        regret += pull(&mut bandit, action)?;
        if t == 1000 {
            regret_1000 = regret;
        }
    }
    let share = bandit.arm(Action::Keyword).unwrap().pulls as f64 / 10_000.0;
    check(share > 0.8, || format!("best-arm share {share:.3}"))?;
    check(regret / 10_000.0 < regret_1000 / 1000.0, || {
        format!("regret/t did not shrink: {:.4} at 1000, {:.4} at 10000", regret_1000 / 1000.0, regret / 10_000.0)
    })?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "best share {share:.3} ({best_pulls} selected), regret/t {:.4} -> {:.4}",
        regret_1000 / 1000.0,
        regret / 10_000.0
    ))
}

fn random_pull(rng: &mut ChaCha8Rng) -> PullResult {
    let labels = [Label::Irrelevant, Label::Relevant, Label::SeedCandidate];
    let retrieved: Vec<PageRecord> = (0..rng.gen_range(0..30))
        .map(|i| PageRecord {
            url: url(i),
            text: String::new(),
            embedding: None,
            similarity: Some(rng.gen_range(-1.0..=1.0)),
            label: labels[rng.gen_range(0..3)],
            discovered_by: DiscoveredBy::Forward,
            step: 1,
            out_links: Vec::new(),
        })
        .collect();
    let domains: Vec<Domain> = retrieved.iter().map(|p| Domain::new(p.url.host()).unwrap()).collect();
    let new_domains: BTreeSet<Domain> = domains.into_iter().filter(|_| rng.gen_bool(0.5)).collect();
    PullResult { source_page: url(0), action: Action::Forward, retrieved, new_domains, failed: false }
}

fn reward_formula() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let result = random_pull(&mut rng);
        let delta: f64 = if i % 10 == 0 { 0.0 } else { rng.gen_range(0.0..4.0) };
        let relevant = result.retrieved.iter().filter(|p| matches!(p.label, Label::Relevant | Label::SeedCandidate)).count();
        let oracle_raw = f64::max(delta * result.new_domains.len() as f64 + relevant as f64, 0.0);
        let raw = raw_reward(&result, delta);
        check(raw == oracle_raw, || format!("pull {i}: raw {raw} vs oracle {oracle_raw}"))?;
        let n = result.retrieved.len();
        let oracle_norm = f64::min(oracle_raw / (n.max(1) as f64 * (1.0 + delta)), 1.0);
        let norm = normalized_reward(raw, n, delta);
        check(norm == oracle_norm, || format!("pull {i}: normalized {norm} vs oracle {oracle_norm}"))?;
        check((0.0..=1.0).contains(&norm), || format!("pull {i}: normalized {norm} out of range"))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok("1000 pulls match the formula".into())
}

fn random_embedding(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return Embedding::new(v).unwrap();
        }
    }
}

fn relevance_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        let dim = rng.gen_range(1..24);
        let query = random_embedding(&mut rng, dim);
        let mut seeds = SeedSet::new();
        let mut oracle = f64::NEG_INFINITY;
        for j in 0..rng.gen_range(1..8) {
            let member = random_embedding(&mut rng, dim);
            let ab = cosine_similarity(&query, &member).unwrap();
            let ba = cosine_similarity(&member, &query).unwrap();
            check((ab - ba).abs() <= 1e-12, || format!("set {i}: asymmetric {ab} vs {ba}"))?;
            check((-1.0..=1.0).contains(&ab), || format!("set {i}: similarity {ab} out of range"))?;
            let factor = rng.gen_range(0.01..100.0);
            let scaled = cosine_similarity(&query.scaled(factor), &member).unwrap();
            check((scaled - ab).abs() <= 1e-9, || format!("set {i}: scaling by {factor} moved {ab} to {scaled}"))?;
            oracle = oracle.max(ab);
            seeds.push(url(j), member);
        }
        let s = similarity_to_set(&query, &seeds).unwrap();
        check(s == oracle, || format!("set {i}: set similarity {s} vs max {oracle}"))?;
    }
    let theta = Thresholds { relevance: 0.6, seed: 0.8 };
    check(label_for(0.6, theta) == Label::Relevant, || "0.6 is not relevant at 0.6".into())?;
    check(label_for(0.6 - 1e-12, theta) == Label::Irrelevant, || "just below 0.6 is relevant".into())?;
    check(label_for(0.8, theta) == Label::SeedCandidate, || "0.8 is not a seed candidate at 0.8".into())?;
    check(label_for(0.8 - 1e-12, theta) == Label::Relevant, || "just below 0.8 is a seed candidate".into())?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok("10000 sets; thresholds inclusive".into())
}

fn frontier_order() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut frontier = Frontier::new();
    let mut oracle: Vec<(f64, u64, CanonicalUrl)> = Vec::new();
    let mut known: HashSet<CanonicalUrl> = HashSet::new();
    let mut popped: HashSet<CanonicalUrl> = HashSet::new();
    let (mut pushes, mut seq, mut pops) = (0, 0u64, 0);
    let mut pop_and_compare = |frontier: &mut Frontier, oracle: &mut Vec<(f64, u64, CanonicalUrl)>| -> Result<(), String> {
        let best = (0..oracle.len()).max_by(|&a, &b| {
            oracle[a].0.total_cmp(&oracle[b].0).then_with(|| oracle[b].1.cmp(&oracle[a].1))
        });
        let expected = best.map(|i| oracle.remove(i));
        let got = frontier.pop_max();
        match (got, expected) {
            (None, None) => Ok(()),
            (Some((u, p)), Some((ep, _, eu))) if u == eu && p == ep => {
                check(popped.insert(u.clone()), || format!("{u} popped twice"))?;
                pops += 1;
                Ok(())
            }
            (got, expected) => Err(format!("popped {got:?}, oracle expected {expected:?}")),
        }
    };
    while pushes < 10_000 {
        if rng.gen_bool(0.6) {
            let u = url(rng.gen_range(0..12_000));
            let priority = rng.gen_range(-10..=20) as f64 / 10.0;
            let inserted = frontier.push(u.clone(), priority).map_err(|e| e.to_string())?;
            let fresh = known.insert(u.clone());
            check(inserted == fresh, || format!("push of {u} returned {inserted}"))?;
            if fresh {
                oracle.push((priority, seq, u));
                seq += 1;
            }
            pushes += 1;
        } else {
            pop_and_compare(&mut frontier, &mut oracle)?;
        }
    }
    while !oracle.is_empty() {
        pop_and_compare(&mut frontier, &mut oracle)?;
    }
    check(frontier.pop_max().is_none(), || "frontier not drained".into())?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{pushes} pushes ({seq} distinct), {pops} pops in oracle order"))
}

/// Records every request before delegating.
struct Recording {
    inner: SimTransport,
    log: Mutex<Vec<CanonicalUrl>>,
}

impl Transport for Recording {
    fn get(&self, url: &CanonicalUrl, ua: &str, timeout: Duration, max: usize) -> Result<RawResponse, TransportError> {
        self.log.lock().unwrap().push(url.clone());
        self.inner.get(url, ua, timeout, max)
    }
}

fn robots_and_blacklist() -> Outcome {
    let start = Instant::now();
    let params = SimParams { pages_per_cluster: 50, private_fraction: 0.2, ..SimParams::standard() };
    let web = sim::generate_web(&params, 3).map_err(|e| e.to_string())?;
    check(web.pages.len() == 200, || format!("fixture has {} pages", web.pages.len()))?;
    let mut cfg = sim::standard_config(&web);
    let seed_hosts: BTreeSet<&str> = cfg.seeds.iter().map(|u| u.host()).collect();
    let banned: BTreeSet<String> = web
        .in_order()
        .filter(|p| p.relevant && !seed_hosts.contains(p.url.host()))
        .map(|p| p.url.host().trim_start_matches("www.").to_string())
        .step_by(3)
        .collect();
    cfg.blacklist_domains = banned.iter().map(|d| Domain::new(d).unwrap()).collect();
    let is_banned = |u: &CanonicalUrl| banned.iter().any(|d| u.host() == d || u.host().ends_with(&format!(".{d}")));
    let is_private = |u: &CanonicalUrl| u.path().starts_with(PRIVATE_PREFIX);

    let recording = Arc::new(Recording { inner: SimTransport::new(&web), log: Mutex::new(Vec::new()) });
    let services = Services { transport: recording.clone(), ..sim::sim_services(&web, cfg.embedding_dimension) };
    let mut engine = Engine::new(cfg, Policy::Ucb1, services).map_err(|e| e.to_string())?;
    while engine.step().map_err(|e| e.to_string())? {}

    let requests = recording.log.lock().unwrap();
    let forbidden: Vec<&CanonicalUrl> = requests.iter().filter(|u| is_banned(u) || is_private(u)).collect();
    check(forbidden.is_empty(), || format!("{} forbidden requests, first {}", forbidden.len(), forbidden[0]))?;
    let tempting = engine
        .events()
        .iter()
        .flat_map(|e| &e.retrieved)
        .filter_map(|p| web.page(&p.url))
        .flat_map(|p| &p.out_links)
        .filter(|u| is_banned(u) || is_private(u))
        .count();
    check(tempting > 0, || "crawl never encountered a forbidden link".into())?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{} requests, 0 forbidden; {tempting} forbidden links skipped", requests.len()))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let web = sim::standard_web();
    let cfg = sim::standard_config(&web);
    check(web.pages.len() == 400 && cfg.seeds.len() == 17 && cfg.max_steps == 500, || "standard fixture shape".into())?;
    let ucb = sim::run_simulation(&cfg, &web, Policy::Ucb1).map_err(|e| e.to_string())?;
    let random = sim::run_simulation(&cfg, &web, Policy::Random).map_err(|e| e.to_string())?;
    let again = sim::run_simulation(&cfg, &web, Policy::Ucb1).map_err(|e| e.to_string())?;
    let (hr, hr_random) = (ucb.report.harvest_rate, random.report.harvest_rate);
    let ratio = hr / hr_random;
    let precision = ucb.precision.unwrap_or(0.0);
    let summary = format!(
        "UCB1 HR {hr:.2}% vs random {hr_random:.2}% (x{ratio:.3}), precision {precision:.3}, {} new seeds",
        ucb.report.new_seeds
    );
    check(ratio >= 1.5, || format!("ratio below 1.5: {summary}"))?;
    check(hr >= 20.0, || format!("harvest rate below 20%: {summary}"))?;
    check(precision >= 0.8, || format!("precision below 0.8: {summary}"))?;
    check(ucb.report.new_seeds >= 1, || format!("no seed promoted: {summary}"))?;
    check(events_to_jsonl(&ucb.events) == events_to_jsonl(&again.events), || "event logs differ between runs".into())?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(summary)
}

fn checkpoint_equivalence() -> Outcome {
    let start = Instant::now();
    let web = sim::standard_web();
    let mut cfg = sim::standard_config(&web);
    cfg.max_steps = 100;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (full, split) = (dir.path().join("full.jsonl"), dir.path().join("split.jsonl"));

    let mut engine = sim::sim_engine(&cfg, &web, Policy::Ucb1)
        .map_err(|e| e.to_string())?
        .with_event_log(EventWriter::create(&full).map_err(|e| e.to_string())?);
    while engine.step().map_err(|e| e.to_string())? {}

    let mut first = sim::sim_engine(&cfg, &web, Policy::Ucb1)
        .map_err(|e| e.to_string())?
        .with_event_log(EventWriter::create(&split).map_err(|e| e.to_string())?);
    while first.crawl_steps() < 50 && first.step().map_err(|e| e.to_string())? {}
    let document = first.checkpoint();
    drop(first);

    let state: EngineState = metrics::restore(&document).map_err(|e| e.to_string())?;
    let (writer, events) = EventWriter::resume(&split, state.events_logged as usize).map_err(|e| e.to_string())?;
    let services = sim::sim_services(&web, cfg.embedding_dimension);
    let mut resumed = Engine::resume(state, services, events).map_err(|e| e.to_string())?.with_event_log(writer);
    while resumed.step().map_err(|e| e.to_string())? {}

    let (a, b) = (std::fs::read(&full).unwrap(), std::fs::read(&split).unwrap());
    check(a == b, || "resumed event log differs from the uninterrupted run".into())?;
    check(resumed.crawl_steps() == 100, || format!("resumed run ended at step {}", resumed.crawl_steps()))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{} events identical after resuming at step 50", resumed.events().len()))
}

fn action_subsets() -> Outcome {
    let web = sim::standard_web();
    let base = sim::standard_config(&web);
    let mut counts = Vec::new();
    for subset in ["BFK", "BF", "FK", "BK", "F", "B", "K"] {
        let mut cfg = base.clone();
        cfg.actions_enabled = subset.parse().unwrap();
        let run = sim::run_simulation(&cfg, &web, Policy::Ucb1).map_err(|e| format!("TC_{subset}: {e}"))?;
        counts.push((subset, run.report.pages_total));
    }
    let table = counts.iter().map(|(s, p)| format!("{s}={p}")).collect::<Vec<_>>().join(" ");
    let k = counts.iter().find(|(s, _)| *s == "K").unwrap().1;
    let others = counts.iter().filter(|(s, _)| *s != "K").map(|(_, p)| *p).min().unwrap();
    check(k < others, || format!("K-only is not the smallest: {table}"))?;
    Ok(format!("|P|: {table}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("harvest-rate formula", harvest_rate_formula),
        ("UCB1 Bernoulli oracle", ucb1_bernoulli),
        ("reward formula", reward_formula),
        ("relevance suite", relevance_suite),
        ("frontier order oracle", frontier_order),
        ("robots and blacklist compliance", robots_and_blacklist),
        ("end-to-end simulation", end_to_end),
        ("checkpoint equivalence", checkpoint_equivalence),
        ("action-subset parity", action_subsets),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
