//! `__NAME__` placeholder tokens.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

pub fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"__[A-Z][A-Z0-9]*(?:_[A-Z0-9]+)*__").expect("valid regex"))
}

pub fn placeholders(text: &str) -> BTreeSet<String> {
    placeholder_regex()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

pub fn contains_placeholder(text: &str) -> bool {
    placeholder_regex().is_match(text)
}

/// Names of placeholders in `before` that are missing from `after`.
pub fn lost_placeholders(before: &str, after: &str) -> Vec<String> {
    let kept = placeholders(after);
    placeholders(before)
        .into_iter()
        .filter(|p| !kept.contains(p))
        .collect()
}
