//! Rule-based separation of genuine data files from runtime noise.
//!
//! Rules are evaluated in ascending `order`; the first match decides. When
//! nothing matches, the config's `default_action` applies.

mod defaults;

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use globset::{GlobBuilder, GlobMatcher};
use serde::{Deserialize, Serialize};

use crate::parser::{OpenFlag, OpenFlags, ResolvedAccess};

pub use defaults::default_rules;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Path equals the pattern or lies below it (segment-aware).
    PathPrefix,
    Glob,
    Substring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Exclude,
    Include,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRule {
    pub order: i64,
    pub matcher: Matcher,
    pub pattern: String,
    pub action: Action,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("cannot read filter config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("filter config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid rule at order {order}: {message}")]
    InvalidRule { order: i64, message: String },
}

impl FilterError {
    pub fn code(&self) -> &'static str {
        match self {
            FilterError::Io { .. } => "io",
            FilterError::Parse { .. } | FilterError::InvalidRule { .. } => "filter_config",
        }
    }
}

#[derive(Clone, Debug)]
struct CompiledRule {
    rule: FilterRule,
    glob: Option<GlobMatcher>,
}

impl CompiledRule {
    fn new(rule: FilterRule) -> Result<Self, FilterError> {
        let invalid = |message: String| FilterError::InvalidRule {
            order: rule.order,
            message,
        };
        if rule.pattern.is_empty() {
            return Err(invalid("empty pattern".into()));
        }
        if rule.action == Action::Exclude && rule.reason.trim().is_empty() {
            return Err(invalid("exclude rules need a reason".into()));
        }
        let glob = match rule.matcher {
            Matcher::Glob => Some(
                GlobBuilder::new(&rule.pattern)
                    .literal_separator(true)
                    .build()
                    .map_err(|e| invalid(e.to_string()))?
                    .compile_matcher(),
            ),
            _ => None,
        };
        Ok(CompiledRule { rule, glob })
    }

    fn matches(&self, path: &str) -> bool {
        match self.rule.matcher {
            Matcher::PathPrefix => {
                let prefix = self.rule.pattern.trim_end_matches('/');
                prefix.is_empty()
                    || path == prefix
                    || path
                        .strip_prefix(prefix)
                        .is_some_and(|rest| rest.starts_with('/'))
            }
            Matcher::Substring => path.contains(&self.rule.pattern),
            Matcher::Glob => self.glob.as_ref().is_some_and(|g| g.is_match(path)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Include,
    Exclude(String),
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    rules: Vec<CompiledRule>,
    pub default_action: Action,
}

impl FilterConfig {
    /// Builds a config; rule orders must be strictly increasing.
    pub fn new(rules: Vec<FilterRule>, default_action: Action) -> Result<Self, FilterError> {
        for pair in rules.windows(2) {
            if pair[1].order <= pair[0].order {
                return Err(FilterError::InvalidRule {
                    order: pair[1].order,
                    message: format!("order must be greater than the preceding {}", pair[0].order),
                });
            }
        }
        let rules = rules
            .into_iter()
            .map(CompiledRule::new)
            .collect::<Result<_, _>>()?;
        Ok(FilterConfig {
            rules,
            default_action,
        })
    }

    pub fn defaults() -> Self {
        FilterConfig::new(default_rules(), Action::Include).expect("built-in rules are valid")
    }

    pub fn rules(&self) -> impl Iterator<Item = &FilterRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    /// Puts an exact-path exclusion ahead of every existing rule. Used for the
    /// notebook file and the trace log itself.
    pub fn exclude_path_first(&mut self, path: &str, reason: &str) {
        let order = self.rules.first().map_or(0, |r| r.rule.order) - 1;
        let rule = FilterRule {
            order,
            matcher: Matcher::PathPrefix,
            pattern: path.to_string(),
            action: Action::Exclude,
            reason: reason.to_string(),
        };
        let compiled = CompiledRule::new(rule).expect("nonempty path and reason");
        self.rules.insert(0, compiled);
    }

    pub fn classify(&self, path: &str) -> Decision {
        for c in &self.rules {
            if c.matches(path) {
                return match c.rule.action {
                    Action::Include => Decision::Include,
                    Action::Exclude => Decision::Exclude(c.rule.reason.clone()),
                };
            }
        }
        match self.default_action {
            Action::Include => Decision::Include,
            Action::Exclude => Decision::Exclude("default".into()),
        }
    }
}

/// Parses a filter config document: a JSON array of rule objects.
pub fn parse_rules(text: &str) -> Result<Vec<FilterRule>, FilterError> {
    serde_json::from_str(text).map_err(|e| FilterError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Loads the effective configuration. User rules (sorted by their order)
/// run before the built-in defaults, which are renumbered to follow them.
pub fn load_rules(config_source: Option<&Path>) -> Result<FilterConfig, FilterError> {
    let mut user = match config_source {
        None => Vec::new(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| FilterError::Io {
                path: path.display().to_string(),
                source,
            })?;
            parse_rules(&text)?
        }
    };
    user.sort_by_key(|r| r.order);
    let base = user.last().map_or(defaults::BASE_ORDER, |r| {
        (r.order + defaults::ORDER_STEP).max(defaults::BASE_ORDER)
    });
    let mut rules = user;
    rules.extend(default_rules().into_iter().enumerate().map(|(i, mut r)| {
        r.order = base + defaults::ORDER_STEP * i as i64;
        r
    }));
    FilterConfig::new(rules, Action::Include)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    Read,
    Written,
    ReadWrite,
}

impl AccessMode {
    pub fn from_flags(flags: &OpenFlags) -> Self {
        if flags.is_write() {
            AccessMode::Written
        } else {
            AccessMode::Read
        }
    }

    fn merge(self, other: AccessMode) -> AccessMode {
        if self == other {
            self
        } else {
            AccessMode::ReadWrite
        }
    }

    pub fn is_read(self) -> bool {
        matches!(self, AccessMode::Read | AccessMode::ReadWrite)
    }
}

/// A file the computation genuinely used.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDependency {
    pub absolute_path: String,
    pub mode: AccessMode,
    /// Index into the input accesses of the earliest contributing event.
    pub first_seen: usize,
    pub event_count: usize,
}

/// Where every input access went.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortlistTally {
    pub unresolved: usize,
    pub failed: usize,
    pub directories: usize,
    pub excluded: BTreeMap<String, usize>,
    /// Accesses that ended up in some dependency.
    pub included: usize,
}

impl ShortlistTally {
    pub fn total(&self) -> usize {
        self.unresolved + self.failed + self.directories + self.included + self.excluded.values().sum::<usize>()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Shortlist {
    pub dependencies: Vec<FileDependency>,
    pub tally: ShortlistTally,
}

pub fn shortlist_with_tally(accesses: &[ResolvedAccess], config: &FilterConfig) -> Shortlist {
    let mut tally = ShortlistTally::default();
    let mut deps: Vec<FileDependency> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut decisions: HashMap<&str, Decision> = HashMap::new();

    for (i, access) in accesses.iter().enumerate() {
        let Some(path) = access.path() else {
            tally.unresolved += 1;
            continue;
        };
        if !access.event.result.is_ok() {
            tally.failed += 1;
            continue;
        }
        if access.event.flags.contains(&OpenFlag::Directory) {
            tally.directories += 1;
            continue;
        }
        let decision = decisions
            .entry(path)
            .or_insert_with(|| config.classify(path));
        if let Decision::Exclude(reason) = decision {
            *tally.excluded.entry(reason.clone()).or_default() += 1;
            continue;
        }
        tally.included += 1;
        let mode = AccessMode::from_flags(&access.event.flags);
        match index.get(path) {
            Some(&d) => {
                deps[d].mode = deps[d].mode.merge(mode);
                deps[d].event_count += 1;
            }
            None => {
                index.insert(path.to_string(), deps.len());
                deps.push(FileDependency {
                    absolute_path: path.to_string(),
                    mode,
                    first_seen: i,
                    event_count: 1,
                });
            }
        }
    }
    Shortlist {
        dependencies: deps,
        tally,
    }
}

/// Filters, deduplicates and orders accesses into the dependency shortlist.
pub fn shortlist(accesses: &[ResolvedAccess], config: &FilterConfig) -> Vec<FileDependency> {
    shortlist_with_tally(accesses, config).dependencies
}
