//! Crawl configuration: a JSON object whose keys are the snake_case field
//! names of [`CrawlConfig`]. Unspecified keys take defaults.

use std::collections::BTreeSet;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::{CanonicalUrl, Domain};
use crate::fetcher::blacklist::DEFAULT_EXTENSIONS;
use crate::model::ActionSet;

pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.6;
pub const DEFAULT_SEED_THRESHOLD: f64 = 0.8;
pub const DEFAULT_MAX_STEPS: u64 = 2000;
pub const DEFAULT_DOMAIN_WEIGHT: f64 = 1.0;
pub const DEFAULT_USER_AGENT: &str = "threatcrawl/0.1";
pub const DEFAULT_MAX_BODY_BYTES: usize = 2 * 1024 * 1024;
pub const MAX_RETRIES_LIMIT: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config is not a JSON object: {0}")]
    Malformed(String),
    #[error("SchemaError at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("ConstraintError: {0}")]
    Constraint(String),
}

/// An HTTP adapter endpoint (search, backlink or embedding service).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpAdapter {
    pub endpoint: String,
    /// Environment variable holding a bearer token, if the service needs one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

/// External services used in live mode. Absent services disable their arm's
/// results (or, for embeddings, select the deterministic hash provider).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adapters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backlink: Option<HttpAdapter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<HttpAdapter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<HttpAdapter>,
    /// Fixture file `{"backlinks": {...}, "search": {...}}` standing in for
    /// the backlink and search services.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
}

impl Adapters {
    pub fn is_empty(&self) -> bool {
        *self == Adapters::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlConfig {
    pub seeds: Vec<CanonicalUrl>,
    pub relevance_threshold: f64,
    pub seed_threshold: f64,
    pub max_steps: u64,
    pub domain_weight: f64,
    pub actions_enabled: ActionSet,
    pub blacklist_domains: BTreeSet<Domain>,
    /// Merge the bundled starter blacklist into `blacklist_domains`.
    pub use_default_blacklist: bool,
    pub blacklist_extensions: BTreeSet<String>,
    pub politeness_delay_ms: u64,
    pub user_agent: String,
    pub rng_seed: u64,
    pub keyword_count: usize,
    pub search_result_cap: usize,
    pub backlink_result_cap: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_body_bytes: usize,
    pub embedding_dimension: usize,
    #[serde(default, skip_serializing_if = "Adapters::is_empty")]
    pub adapters: Adapters,
}

impl CrawlConfig {
    /// A config with every field at its default.
    pub fn with_seeds(seeds: Vec<CanonicalUrl>) -> CrawlConfig {
        CrawlConfig {
            seeds,
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            seed_threshold: DEFAULT_SEED_THRESHOLD,
            max_steps: DEFAULT_MAX_STEPS,
            domain_weight: DEFAULT_DOMAIN_WEIGHT,
            actions_enabled: ActionSet::all(),
            blacklist_domains: BTreeSet::new(),
            use_default_blacklist: true,
            blacklist_extensions: DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            politeness_delay_ms: 1000,
            user_agent: DEFAULT_USER_AGENT.to_string(),
            rng_seed: 0,
            keyword_count: 3,
            search_result_cap: 10,
            backlink_result_cap: 25,
            timeout_ms: 10_000,
            max_retries: 2,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            embedding_dimension: 1024,
            adapters: Adapters::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = |msg: String| Err(ConfigError::Constraint(msg));
        if self.seeds.is_empty() {
            return c("seeds must be nonempty".into());
        }
        for (name, v) in [
            ("relevance_threshold", self.relevance_threshold),
            ("seed_threshold", self.seed_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return c(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.seed_threshold < self.relevance_threshold {
            return c(format!(
                "seed_threshold ({}) must be >= relevance_threshold ({})",
                self.seed_threshold, self.relevance_threshold
            ));
        }
        if self.max_steps == 0 {
            return c("max_steps must be positive".into());
        }
        if !(self.domain_weight >= 0.0 && self.domain_weight.is_finite()) {
            return c(format!("domain_weight = {} must be a nonnegative number", self.domain_weight));
        }
        for (name, v) in [
            ("keyword_count", self.keyword_count),
            ("search_result_cap", self.search_result_cap),
            ("backlink_result_cap", self.backlink_result_cap),
            ("embedding_dimension", self.embedding_dimension),
        ] {
            if v == 0 {
                return c(format!("{name} must be positive"));
            }
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return c(format!("max_retries = {} exceeds {MAX_RETRIES_LIMIT}", self.max_retries));
        }
        Ok(())
    }

    /// Configured domains plus the bundled list when enabled.
    pub fn effective_blacklist_domains(&self) -> BTreeSet<Domain> {
        let mut domains = self.blacklist_domains.clone();
        if self.use_default_blacklist {
            domains.extend(crate::fetcher::blacklist::default_domains());
        }
        domains
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<CrawlConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(ConfigError::Malformed("top-level value must be an object".into()));
    };
    let seeds: Vec<CanonicalUrl> = match map.get("seeds") {
        Some(v) => field("seeds", v)?,
        None => {
            return Err(ConfigError::Schema { key: "seeds".into(), message: "missing required key".into() })
        }
    };
    let mut cfg = CrawlConfig::with_seeds(seeds);
    apply_fields(&mut cfg, &map)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn serialize_config(cfg: &CrawlConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

fn field<T: DeserializeOwned>(key: &str, value: &Value) -> Result<T, ConfigError> {
    T::deserialize(value).map_err(|e| ConfigError::Schema { key: key.to_string(), message: e.to_string() })
}

fn apply_fields(cfg: &mut CrawlConfig, map: &Map<String, Value>) -> Result<(), ConfigError> {
    for (key, v) in map {
        match key.as_str() {
            "seeds" => {}
            "relevance_threshold" => cfg.relevance_threshold = field(key, v)?,
            "seed_threshold" => cfg.seed_threshold = field(key, v)?,
            "max_steps" => cfg.max_steps = field(key, v)?,
            "domain_weight" => cfg.domain_weight = field(key, v)?,
            "actions_enabled" => cfg.actions_enabled = field(key, v)?,
            "blacklist_domains" => {
                let names: Vec<String> = field(key, v)?;
                cfg.blacklist_domains = names
                    .iter()
                    .map(|n| {
                        Domain::new(n).ok_or_else(|| ConfigError::Schema {
                            key: key.clone(),
                            message: "empty domain name".into(),
                        })
                    })
                    .collect::<Result<_, _>>()?;
            }
            "use_default_blacklist" => cfg.use_default_blacklist = field(key, v)?,
            "blacklist_extensions" => {
                let exts: Vec<String> = field(key, v)?;
                cfg.blacklist_extensions = exts.into_iter().map(|e| normalize_extension(&e)).collect();
            }
            "politeness_delay_ms" => cfg.politeness_delay_ms = field(key, v)?,
            "user_agent" => cfg.user_agent = field(key, v)?,
            "rng_seed" => cfg.rng_seed = field(key, v)?,
            "keyword_count" => cfg.keyword_count = field(key, v)?,
            "search_result_cap" => cfg.search_result_cap = field(key, v)?,
            "backlink_result_cap" => cfg.backlink_result_cap = field(key, v)?,
            "timeout_ms" => cfg.timeout_ms = field(key, v)?,
            "max_retries" => cfg.max_retries = field(key, v)?,
            "max_body_bytes" => cfg.max_body_bytes = field(key, v)?,
            "embedding_dimension" => cfg.embedding_dimension = field(key, v)?,
            "adapters" => cfg.adapters = field(key, v)?,
            _ => {
                return Err(ConfigError::Schema { key: key.clone(), message: "unknown key".into() });
            }
        }
    }
    Ok(())
}

/// `PNG` and `.png` both become `.png`.
pub fn normalize_extension(ext: &str) -> String {
    let ext = ext.trim().to_ascii_lowercase();
    if ext.starts_with('.') {
        ext
    } else {
        format!(".{ext}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_only_takes_defaults() {
        let cfg = parse_config(r#"{"seeds": ["https://example.com/a"]}"#).unwrap();
        assert_eq!(cfg.relevance_threshold, 0.6);
        assert_eq!(cfg.seed_threshold, 0.8);
        assert_eq!(cfg.max_steps, 2000);
        assert_eq!(cfg.domain_weight, 1.0);
        assert_eq!(cfg.keyword_count, 3);
        assert_eq!(cfg.search_result_cap, 10);
        assert_eq!(cfg.backlink_result_cap, 25);
        assert_eq!(cfg.actions_enabled, ActionSet::all());
        assert_eq!(cfg.max_body_bytes, 2 * 1024 * 1024);
        assert!(cfg.blacklist_extensions.contains(".png"));
    }

    #[test]
    fn max_steps_override() {
        let cfg = parse_config(r#"{"seeds": ["https://example.com/"], "max_steps": 500}"#).unwrap();
        assert_eq!(cfg.max_steps, 500);
    }

    #[test]
    fn threshold_ordering_is_a_constraint() {
        let err = parse_config(
            r#"{"seeds": ["https://example.com/"], "seed_threshold": 0.5, "relevance_threshold": 0.6}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Constraint(_)), "{err}");
    }

    #[test]
    fn schema_errors_name_the_key() {
        let cases = [
            (r#"{"seeds": ["https://e.com/"], "max_stepz": 5}"#, "max_stepz"),
            (r#"{"seeds": ["https://e.com/"], "max_steps": "many"}"#, "max_steps"),
            (r#"{"seeds": ["ftp://e.com/"]}"#, "seeds"),
            (r#"{"max_steps": 5}"#, "seeds"),
            (r#"{"seeds": ["https://e.com/"], "actions_enabled": "FX"}"#, "actions_enabled"),
        ];
        for (text, key) in cases {
            match parse_config(text) {
                Err(ConfigError::Schema { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(parse_config("[1]"), Err(ConfigError::Malformed(_))));
        assert!(matches!(parse_config("{"), Err(ConfigError::Malformed(_))));
    }

    #[test]
    fn other_constraints() {
        let base = r#""seeds": ["https://e.com/"]"#;
        for extra in [
            r#""seeds": []"#,
            r#""max_retries": 4"#,
            r#""domain_weight": -1"#,
            r#""keyword_count": 0"#,
            r#""relevance_threshold": 1.5"#,
        ] {
            let text = if extra.starts_with(r#""seeds""#) {
                format!("{{{extra}}}")
            } else {
                format!("{{{base}, {extra}}}")
            };
            assert!(matches!(parse_config(&text), Err(ConfigError::Constraint(_))), "{text}");
        }
    }

    #[test]
    fn extensions_and_blacklist_normalized() {
        let cfg = parse_config(
            r#"{"seeds": ["https://e.com/"], "blacklist_extensions": ["PDF", ".Zip"],
                "blacklist_domains": ["Foo.COM"], "use_default_blacklist": false}"#,
        )
        .unwrap();
        assert_eq!(cfg.blacklist_extensions, [".pdf".to_string(), ".zip".to_string()].into());
        assert_eq!(cfg.effective_blacklist_domains(), [Domain::new("foo.com").unwrap()].into());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parse_after_serialize_is_identity(
                theta in 0.0f64..=1.0,
                gap in 0.0f64..=1.0,
                steps in 1u64..100_000,
                delta in 0.0f64..10.0,
                mask in 1u8..8,
                seed in any::<u64>(),
                k in 1usize..10,
                delay in 0u64..5000,
                retries in 0u32..=3,
                n_seeds in 1usize..5,
            ) {
                let seeds = (0..n_seeds)
                    .map(|i| format!("https://site{i}.example.org/p").parse().unwrap())
                    .collect();
                let mut cfg = CrawlConfig::with_seeds(seeds);
                cfg.relevance_threshold = theta;
                cfg.seed_threshold = theta + (1.0 - theta) * gap;
                cfg.max_steps = steps;
                cfg.domain_weight = delta;
                let actions = crate::model::Action::ALL
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| a);
                cfg.actions_enabled = ActionSet::from_actions(actions).unwrap();
                cfg.rng_seed = seed;
                cfg.keyword_count = k;
                cfg.politeness_delay_ms = delay;
                cfg.max_retries = retries;
                cfg.blacklist_domains.insert(Domain::new("blocked.example").unwrap());
                let back = parse_config(&serialize_config(&cfg)).unwrap();
                prop_assert_eq!(back, cfg);
            }
        }
    }
}
