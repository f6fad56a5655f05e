//! Gazetteer entity spotting and relation-table joins.
//!
//! A flat lexicon (`surface_phrase<TAB>concept_id`) and relation table
//! (`head<TAB>relation<TAB>tail`) stand in for a licensed medical
//! thesaurus. Rows exported from one can be dropped in unchanged.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use thiserror::Error;

use crate::kg::{build_graph, normalize_concept, words, ConceptId, KgError, KnowledgeGraph, RelationKind, Triple};

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: {source}")]
    Concept {
        line: usize,
        #[source]
        source: KgError,
    },
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        (!l.trim().is_empty() && !l.trim_start().starts_with('#')).then_some((i + 1, l))
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, ConceptId>,
    max_phrase_len: usize,
}

impl Lexicon {
    /// Builds a lexicon from `(surface phrase, concept)` pairs. Surface
    /// phrases are normalized; later duplicates overwrite earlier ones.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, KgError> {
        let mut lex = Lexicon::default();
        for (surface, concept) in pairs {
            lex.insert(normalize_concept(surface)?, normalize_concept(concept)?);
        }
        Ok(lex)
    }

    fn insert(&mut self, key: ConceptId, concept: ConceptId) {
        self.max_phrase_len = self.max_phrase_len.max(key.word_count());
        self.entries.insert(key.as_str().to_string(), concept);
    }

    /// A lexicon whose surface phrases are the concepts themselves.
    pub fn from_concepts(concepts: impl IntoIterator<Item = ConceptId>) -> Self {
        let mut lex = Lexicon::default();
        for c in concepts {
            lex.insert(c.clone(), c);
        }
        lex
    }

    pub fn parse(text: &str) -> Result<Self, MatcherError> {
        let mut lex = Lexicon::default();
        for (line, l) in content_lines(text) {
            let (surface, concept) = l.split_once('\t').ok_or_else(|| MatcherError::Format {
                line,
                message: "expected `surface_phrase<TAB>concept_id`".into(),
            })?;
            let key = normalize_concept(surface).map_err(|source| MatcherError::Concept { line, source })?;
            let concept = normalize_concept(concept).map_err(|source| MatcherError::Concept { line, source })?;
            lex.insert(key, concept);
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn lookup(&self, phrase: &str) -> Option<&ConceptId> {
        self.entries.get(phrase)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationTable {
    rows: BTreeSet<Triple>,
}

impl RelationTable {
    pub fn parse(text: &str) -> Result<Self, MatcherError> {
        let mut rows = BTreeSet::new();
        for (line, l) in content_lines(text) {
            let fields: Vec<&str> = l.split('\t').collect();
            let [h, r, t] = fields[..] else {
                return Err(MatcherError::Format {
                    line,
                    message: "expected `head<TAB>relation<TAB>tail`".into(),
                });
            };
            let concept = |s: &str| normalize_concept(s).map_err(|source| MatcherError::Concept { line, source });
            let relation = RelationKind::from_surface(r).map_err(|source| MatcherError::Concept { line, source })?;
            rows.insert(Triple::new(concept(h)?, relation, concept(t)?));
        }
        Ok(RelationTable { rows })
    }

    pub fn rows(&self) -> impl Iterator<Item = &Triple> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl FromIterator<Triple> for RelationTable {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        RelationTable {
            rows: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMatch {
    pub concept: ConceptId,
    /// Char offsets into the input text.
    pub span: Range<usize>,
}

/// Greedy longest-match, left to right, non-overlapping.
pub fn extract_entities(text: &str, lexicon: &Lexicon) -> Vec<EntityMatch> {
    let ws = words(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < ws.len() {
        let longest = lexicon.max_phrase_len().min(ws.len() - i);
        let hit = (1..=longest).rev().find_map(|n| {
            let key = ws[i..i + n]
                .iter()
                .map(|w| w.text.as_str())
                .collect::<Vec<_>>()
                .join("_");
            lexicon.lookup(&key).map(|c| (n, c.clone()))
        });
        match hit {
            Some((n, concept)) => {
                out.push(EntityMatch {
                    concept,
                    span: ws[i].span.start..ws[i + n - 1].span.end,
                });
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

pub fn entity_set(text: &str, lexicon: &Lexicon) -> BTreeSet<ConceptId> {
    extract_entities(text, lexicon)
        .into_iter()
        .map(|m| m.concept)
        .collect()
}

/// Keeps the table rows whose head and tail both occur among the entities
/// of `entities`.
pub fn join_relations(entities: &BTreeSet<ConceptId>, table: &RelationTable, tag: &str) -> KnowledgeGraph {
    build_graph(
        table
            .rows()
            .filter(|t| entities.contains(&t.head) && entities.contains(&t.tail))
            .cloned(),
        tag,
    )
}

/// Per-sample graph: entities are spotted in question and context
/// separately, then the relation table is joined on both endpoints.
pub fn build_context_kg(
    question: &str,
    context: &str,
    lexicon: &Lexicon,
    table: &RelationTable,
    tag: &str,
) -> KnowledgeGraph {
    let mut entities = entity_set(question, lexicon);
    entities.extend(entity_set(context, lexicon));
    join_relations(&entities, table, tag)
}
