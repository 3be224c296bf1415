//! robots.txt parsing and matching.
//!
//! Rules come from the group whose user-agent token is the longest one
//! contained in our agent string, falling back to `*`. Among matching rules
//! the longest pattern wins and Allow beats Disallow on equal length.
//! Patterns support `*` and a trailing `$`.

use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalUrl;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Rule {
    allow: bool,
    pattern: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Group {
    agents: Vec<String>,
    rules: Vec<Rule>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Robots {
    groups: Vec<Group>,
    #[serde(default)]
    disallow_all: bool,
}

impl Robots {
    pub fn allow_all() -> Robots {
        Robots::default()
    }

    /// Used when the robots file is temporarily unreachable (5xx).
    pub fn disallow_all() -> Robots {
        Robots { groups: Vec::new(), disallow_all: true }
    }

    /// Lenient parse: unknown or malformed lines are skipped.
    pub fn parse(text: &str) -> Robots {
        let mut groups: Vec<Group> = Vec::new();
        let mut in_rules = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else { continue };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if in_rules || groups.is_empty() {
                        groups.push(Group::default());
                        in_rules = false;
                    }
                    groups.last_mut().expect("group exists").agents.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_rules = true;
                    let Some(group) = groups.last_mut() else { continue };
                    if !value.is_empty() {
                        group.rules.push(Rule { allow: key == "allow", pattern: value.to_string() });
                    }
                }
                _ => {}
            }
        }
        Robots { groups, disallow_all: false }
    }

    pub fn is_allowed(&self, path_and_query: &str, user_agent: &str) -> bool {
        if path_and_query == "/robots.txt" {
            return true;
        }
        if self.disallow_all {
            return false;
        }
        let rules = self.rules_for(user_agent);
        let mut best: Option<(usize, bool)> = None;
        for rule in rules {
            if !pattern_matches(&rule.pattern, path_and_query) {
                continue;
            }
            let len = rule.pattern.len();
            best = match best {
                Some((l, allow)) if l > len || (l == len && allow) => Some((l, allow)),
                _ => Some((len, rule.allow)),
            };
        }
        best.is_none_or(|(_, allow)| allow)
    }

    fn rules_for(&self, user_agent: &str) -> Vec<&Rule> {
        let ua = user_agent.to_ascii_lowercase();
        let specific = self
            .groups
            .iter()
            .flat_map(|g| g.agents.iter())
            .filter(|a| a.as_str() != "*" && !a.is_empty() && ua.contains(a.as_str()))
            .max_by_key(|a| a.len());
        let wanted = specific.map_or("*", |a| a.as_str());
        self.groups
            .iter()
            .filter(|g| g.agents.iter().any(|a| a == wanted))
            .flat_map(|g| g.rules.iter())
            .collect()
    }
}

pub fn allowed_by_robots(robots_txt: &str, url: &CanonicalUrl, agent: &str) -> bool {
    Robots::parse(robots_txt).is_allowed(url.path_and_query(), agent)
}

/// Prefix match with `*` wildcards; a trailing `$` anchors at the end.
fn pattern_matches(pattern: &str, path: &str) -> bool {
    let (body, anchored) = match pattern.strip_suffix('$') {
        Some(b) => (b, true),
        None => (pattern, false),
    };
    let mut pat: Vec<u8> = body.bytes().collect();
    if !anchored {
        pat.push(b'*');
    }
    wildcard_full_match(&pat, path.as_bytes())
}

fn wildcard_full_match(pat: &[u8], text: &[u8]) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while t < text.len() {
        if p < pat.len() && pat[p] == b'*' {
            star = Some((p, t));
            p += 1;
        } else if p < pat.len() && pat[p] == text[t] {
            p += 1;
            t += 1;
        } else if let Some((sp, st)) = star {
            p = sp + 1;
            t = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    pat[p..].iter().all(|&c| c == b'*')
}
