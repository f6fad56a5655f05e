//! Text form of rule-grouped triple lists, as produced for and by the
//! logic-understanding model:
//!
//! ```text
//! Rule of Diagnosis and Interaction: [(apremilast, diagnoses, immunomodulatory agent), ...]
//! ```

use std::collections::{BTreeMap, BTreeSet};

use crate::kg::{normalize_concept, RelationKind, Triple};
use crate::rules::{display_name, rule_name_from_display, BUILTIN_RULE_NAMES};

/// Target text when no rule produced anything.
pub const NO_TRIPLES: &str = "NO_TRIPLES";

/// Renders `(rule name, triples)` groups in the given order, one line per
/// non-empty group. Triples are deduplicated and sorted within a group.
pub fn render_triple_groups<'a, I, T>(groups: I) -> String
where
    I: IntoIterator<Item = (&'a str, T)>,
    T: IntoIterator<Item = &'a Triple>,
{
    let lines: Vec<String> = groups
        .into_iter()
        .filter_map(|(name, triples)| {
            let set: BTreeSet<&Triple> = triples.into_iter().collect();
            if set.is_empty() {
                return None;
            }
            let items = set
                .iter()
                .map(|t| format!("({}, {}, {})", t.head.spaced(), t.relation.verb(), t.tail.spaced()))
                .collect::<Vec<_>>()
                .join(", ");
            Some(format!("Rule of {}: [{}]", display_name(name), items))
        })
        .collect();
    if lines.is_empty() {
        NO_TRIPLES.to_string()
    } else {
        lines.join("\n")
    }
}

/// Result of a best-effort parse. Never fails; anything unreadable lands in
/// `rejects`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LuParse {
    pub rules: BTreeMap<String, Vec<Triple>>,
    pub rejects: Vec<String>,
}

impl LuParse {
    /// Built-in rules first in their usual order, others by name.
    fn ordered_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.rules.keys().map(String::as_str).collect();
        names.sort_by_key(|n| {
            (
                BUILTIN_RULE_NAMES.iter().position(|b| b == n).unwrap_or(usize::MAX),
                *n,
            )
        });
        names
    }

    pub fn render(&self) -> String {
        render_triple_groups(
            self.ordered_names()
                .into_iter()
                .map(|n| (n, self.rules[n].iter())),
        )
    }

    /// `rule_name<TAB>head<TAB>relation<TAB>tail` lines, sorted.
    pub fn to_tsv(&self) -> String {
        let lines: BTreeSet<String> = self
            .rules
            .iter()
            .flat_map(|(name, ts)| ts.iter().map(move |t| format!("{name}\t{}", t.to_tsv())))
            .collect();
        lines.into_iter().map(|l| l + "\n").collect()
    }

    pub fn triple_count(&self) -> usize {
        self.rules.values().map(Vec::len).sum()
    }
}

fn parse_tuple(inner: &str) -> Option<Triple> {
    let parts: Vec<&str> = inner.split(',').collect();
    let [h, r, t] = parts[..] else {
        return None;
    };
    let unquote = |s: &str| s.trim().trim_matches(|c| c == '"' || c == '\'').to_string();
    Some(Triple::new(
        normalize_concept(&unquote(h)).ok()?,
        RelationKind::from_surface(&unquote(r)).ok()?,
        normalize_concept(&unquote(t)).ok()?,
    ))
}

fn parse_segment(segment: &str, out: &mut LuParse) {
    let Some((label, rest)) = segment.split_once(':') else {
        out.rejects.push(segment.trim().to_string());
        return;
    };
    let Some(name) = rule_name_from_display(label) else {
        out.rejects.push(segment.trim().to_string());
        return;
    };
    let mut found = Vec::new();
    let mut leftover = String::new();
    let mut rest = rest;
    while let Some(open) = rest.find('(') {
        leftover.push_str(&rest[..open]);
        let Some(close) = rest[open..].find(')') else {
            leftover.push_str(&rest[open..]);
            rest = "";
            break;
        };
        let inner = &rest[open + 1..open + close];
        match parse_tuple(inner) {
            Some(t) => found.push(t),
            None => out.rejects.push(format!("({inner})")),
        }
        rest = &rest[open + close + 1..];
    }
    leftover.push_str(rest);
    let noise = leftover
        .chars()
        .any(|c| !(c.is_whitespace() || matches!(c, '[' | ']' | ',' | '.' | '…')));
    if found.is_empty() && noise {
        out.rejects.push(segment.trim().to_string());
        return;
    }
    out.rules.entry(name).or_default().extend(found);
}

/// Parses `Rule of <Name>: [(h, r, t), ...]` groups. Several groups may
/// share a line; brackets are optional.
pub fn parse_lu_output(text: &str) -> LuParse {
    const MARKER: &str = "Rule of ";
    let mut out = LuParse::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line == NO_TRIPLES {
            continue;
        }
        let starts: Vec<usize> = line.match_indices(MARKER).map(|(i, _)| i).collect();
        if starts.is_empty() {
            out.rejects.push(line.to_string());
            continue;
        }
        if !line[..starts[0]].trim().trim_matches(',').trim().is_empty() {
            out.rejects.push(line[..starts[0]].trim().to_string());
        }
        for (k, &s) in starts.iter().enumerate() {
            let end = starts.get(k + 1).copied().unwrap_or(line.len());
            parse_segment(&line[s + MARKER.len()..end], &mut out);
        }
    }
    out
}
