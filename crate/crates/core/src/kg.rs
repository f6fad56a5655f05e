//! Concepts, relations, triples and per-sample knowledge graphs.
//!
//! Every graph keeps its triples deduplicated and in total lexicographic
//! order on `(head, relation, tail)`. Relation kinds order by their canonical
//! names, so the tab-separated text form sorts byte-wise in the same order.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KgError {
    #[error("concept text {0:?} contains no letters or digits")]
    EmptyConcept(String),
    #[error("{0:?} is not a canonical concept id")]
    NonCanonicalConcept(String),
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("line {line}: expected `head<TAB>relation<TAB>tail`, got {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<KgError>,
    },
}

/// Normalized concept surface: lowercase words joined by single underscores.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    /// Accepts only text that is already canonical.
    pub fn parse(text: &str) -> Result<Self, KgError> {
        match normalize_concept(text) {
            Ok(id) if id.0 == text => Ok(id),
            _ => Err(KgError::NonCanonicalConcept(text.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Words separated by spaces instead of underscores.
    pub fn spaced(&self) -> String {
        self.0.replace('_', " ")
    }

    pub fn word_count(&self) -> usize {
        self.0.split('_').count()
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ConceptId {
    type Error = KgError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        ConceptId::parse(&value)
    }
}

impl From<ConceptId> for String {
    fn from(value: ConceptId) -> Self {
        value.0
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`' | '\u{02bc}')
}

/// One normalized word of running text together with its char span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub span: Range<usize>,
}

/// Splits text on whitespace and underscores, strips non-alphanumeric
/// characters at both ends of every piece, removes apostrophes and
/// lowercases. Spans are char offsets of the stripped piece in `text`.
pub fn words(text: &str) -> Vec<Word> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() || chars[i] == '_' {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !(chars[i].is_whitespace() || chars[i] == '_') {
            i += 1;
        }
        let piece = &chars[start..i];
        let Some(first) = piece.iter().position(|c| c.is_alphanumeric()) else {
            continue;
        };
        let last = piece.iter().rposition(|c| c.is_alphanumeric()).unwrap_or(first);
        let word: String = piece[first..=last]
            .iter()
            .filter(|c| !is_apostrophe(**c))
            .flat_map(|c| c.to_lowercase())
            .collect();
        out.push(Word {
            text: word,
            span: start + first..start + last + 1,
        });
    }
    out
}

/// Canonicalizes free text into a [`ConceptId`].
pub fn normalize_concept(raw: &str) -> Result<ConceptId, KgError> {
    let joined = words(raw)
        .into_iter()
        .map(|w| w.text)
        .collect::<Vec<_>>()
        .join("_");
    if joined.is_empty() {
        return Err(KgError::EmptyConcept(raw.to_string()));
    }
    Ok(ConceptId(joined))
}

/// The closed set of relation kinds the rules range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RelationKind {
    CoOccursWith,
    Prevents,
    Treats,
    Diagnoses,
    InteractsWith,
    Affects,
    Causes,
    IsA,
}

impl RelationKind {
    pub const ALL: [RelationKind; 8] = [
        RelationKind::CoOccursWith,
        RelationKind::Prevents,
        RelationKind::Treats,
        RelationKind::Diagnoses,
        RelationKind::InteractsWith,
        RelationKind::Affects,
        RelationKind::Causes,
        RelationKind::IsA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::CoOccursWith => "co_occurs_with",
            RelationKind::Prevents => "prevent",
            RelationKind::Treats => "treat",
            RelationKind::Diagnoses => "diagnosis",
            RelationKind::InteractsWith => "interacts_with",
            RelationKind::Affects => "affects",
            RelationKind::Causes => "causes",
            RelationKind::IsA => "is_a",
        }
    }

    /// Third-person verb phrase used in generated triple lists, e.g. `treats`.
    pub fn verb(self) -> &'static str {
        match self {
            RelationKind::CoOccursWith => "co-occurs with",
            RelationKind::Prevents => "prevents",
            RelationKind::Treats => "treats",
            RelationKind::Diagnoses => "diagnoses",
            RelationKind::InteractsWith => "interacts with",
            RelationKind::Affects => "affects",
            RelationKind::Causes => "causes",
            RelationKind::IsA => "is a",
        }
    }

    /// Accepts canonical names, verb phrases and hyphen/space spellings
    /// such as `co-occurs-with` or `Treats`.
    pub fn from_surface(text: &str) -> Result<Self, KgError> {
        let key: String = text
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c.is_whitespace() { '_' } else { c })
            .collect();
        let key = key.trim_matches('_');
        let kind = match key {
            "co_occurs_with" | "co_occurs" | "cooccurs_with" => RelationKind::CoOccursWith,
            "prevent" | "prevents" => RelationKind::Prevents,
            "treat" | "treats" => RelationKind::Treats,
            "diagnosis" | "diagnose" | "diagnoses" => RelationKind::Diagnoses,
            "interacts_with" | "interact_with" => RelationKind::InteractsWith,
            "affects" | "affect" => RelationKind::Affects,
            "causes" | "cause" => RelationKind::Causes,
            "is_a" | "isa" => RelationKind::IsA,
            _ => return Err(KgError::UnknownRelation(text.to_string())),
        };
        Ok(kind)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = KgError;

    /// Strict: canonical names only.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| KgError::UnknownRelation(s.to_string()))
    }
}

impl TryFrom<String> for RelationKind {
    type Error = KgError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<RelationKind> for String {
    fn from(value: RelationKind) -> Self {
        value.name().to_string()
    }
}

impl Ord for RelationKind {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name().cmp(other.name())
    }
}

impl PartialOrd for RelationKind {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: ConceptId,
    pub relation: RelationKind,
    pub tail: ConceptId,
}

impl Triple {
    pub fn new(head: ConceptId, relation: RelationKind, tail: ConceptId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    /// `head<TAB>relation<TAB>tail`
    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}", self.head, self.relation, self.tail)
    }

    pub fn from_tsv(line: &str) -> Result<Self, KgError> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [head, relation, tail] = fields[..] else {
            return Err(KgError::MalformedLine {
                line: 0,
                text: line.to_string(),
            });
        };
        Ok(Triple {
            head: ConceptId::parse(head)?,
            relation: relation.parse()?,
            tail: ConceptId::parse(tail)?,
        })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.relation, self.head, self.tail)
    }
}

/// Deduplicated, canonically ordered triple set for one QA sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: BTreeSet<Triple>,
    source_tag: String,
}

impl KnowledgeGraph {
    pub fn triples(&self) -> impl ExactSizeIterator<Item = &Triple> + Clone {
        self.triples.iter()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn to_vec(&self) -> Vec<Triple> {
        self.triples.iter().cloned().collect()
    }

    /// Sorted graph file body: one TSV line per triple, LF-terminated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_tsv());
            out.push('\n');
        }
        out
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_tsv().as_bytes())
    }

    /// Reads the graph file format. Blank lines and `#` comments are skipped.
    pub fn read_tsv<R: BufRead>(reader: R, tag: &str) -> Result<Self, KgError> {
        let mut triples = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| KgError::MalformedLine {
                line: idx + 1,
                text: e.to_string(),
            })?;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let triple = Triple::from_tsv(trimmed).map_err(|e| match e {
                KgError::MalformedLine { text, .. } => KgError::MalformedLine {
                    line: idx + 1,
                    text,
                },
                other => KgError::AtLine {
                    line: idx + 1,
                    source: Box::new(other),
                },
            })?;
            triples.push(triple);
        }
        Ok(build_graph(triples, tag))
    }
}

impl FromIterator<Triple> for KnowledgeGraph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        build_graph(iter, "")
    }
}

/// Deduplicates and orders raw triples into a graph.
pub fn build_graph(raw_triples: impl IntoIterator<Item = Triple>, tag: &str) -> KnowledgeGraph {
    KnowledgeGraph {
        triples: raw_triples.into_iter().collect(),
        source_tag: tag.to_string(),
    }
}
