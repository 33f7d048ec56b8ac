use super::{Action, FilterRule, Matcher};

pub(crate) const BASE_ORDER: i64 = 10_000;
pub(crate) const ORDER_STEP: i64 = 10;

const DEFAULTS: &[(&str, &str)] = &[
    ("**/__pycache__/**", "python-cache"),
    ("**/*.pyc", "python-cache"),
    ("**/.ipynb_checkpoints/**", "notebook-checkpoint"),
    ("**/.cache/pip/**", "pip-cache"),
    ("**/pip/_internal/**", "pip-cache"),
    ("/usr/lib/**", "library-files"),
    ("/usr/lib64/**", "library-files"),
    ("/usr/local/lib/**", "library-files"),
    ("/lib/**", "library-files"),
    ("/lib64/**", "library-files"),
    ("**/site-packages/**", "library-files"),
    ("**/dist-packages/**", "library-files"),
    ("/proc/**", "pseudo-filesystem"),
    ("/sys/**", "pseudo-filesystem"),
    ("/dev/**", "pseudo-filesystem"),
    ("/etc/**", "system-config"),
    ("**/locale/**", "system-config"),
    ("**/terminfo/**", "system-config"),
    ("**/*.so", "shared-object"),
    ("**/*.so.*", "shared-object"),
];

/// The shipped exclusion rules, orders starting at 10000 in steps of 10.
pub fn default_rules() -> Vec<FilterRule> {
    DEFAULTS
        .iter()
        .enumerate()
        .map(|(i, (pattern, reason))| FilterRule {
            order: BASE_ORDER + ORDER_STEP * i as i64,
            matcher: Matcher::Glob,
            pattern: (*pattern).to_string(),
            action: Action::Exclude,
            reason: (*reason).to_string(),
        })
        .collect()
}
