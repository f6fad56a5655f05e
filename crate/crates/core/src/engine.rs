//! Single-pass rule application over a knowledge graph.
//!
//! Every rule sees only the original graph; derived triples are never fed
//! back as premises. Both body atoms must be instantiated for a match, for
//! disjunctive bodies as well, since a lone atom leaves a head variable
//! unbound.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::kg::{build_graph, ConceptId, KnowledgeGraph, RelationKind, Triple};
use crate::rules::{RuleAst, RuleAtom, Variable};

/// Graph size limit for [`oracle_apply`].
pub const ORACLE_MAX_TRIPLES: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("graph has {size} triples; the brute-force oracle accepts at most {limit}")]
    GraphTooLarge { size: usize, limit: usize },
}

/// Variable assignment for one body match. Variables a rule does not
/// mention stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binding {
    pub x: Option<ConceptId>,
    pub y: Option<ConceptId>,
    pub z: Option<ConceptId>,
}

impl Binding {
    pub fn get(&self, var: Variable) -> Option<&ConceptId> {
        match var {
            Variable::X => self.x.as_ref(),
            Variable::Y => self.y.as_ref(),
            Variable::Z => self.z.as_ref(),
        }
    }

    fn slot(&mut self, var: Variable) -> &mut Option<ConceptId> {
        match var {
            Variable::X => &mut self.x,
            Variable::Y => &mut self.y,
            Variable::Z => &mut self.z,
        }
    }

    /// Binds `var` to `value`, or checks agreement if already bound.
    fn unify(&mut self, var: Variable, value: &ConceptId) -> bool {
        let slot = self.slot(var);
        match slot {
            Some(existing) => existing == value,
            None => {
                *slot = Some(value.clone());
                true
            }
        }
    }

    /// Instantiates an atom. `None` if one of its variables is unbound.
    pub fn instantiate(&self, atom: &RuleAtom) -> Option<Triple> {
        Some(Triple::new(
            self.get(atom.arg1)?.clone(),
            atom.relation,
            self.get(atom.arg2)?.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Derivation {
    pub rule_name: String,
    pub binding: Binding,
    /// The matched body triples, in body-atom order.
    pub premises: Vec<Triple>,
    /// One triple per head atom.
    pub conclusions: Vec<Triple>,
    pub disjunctive: bool,
}

/// Derivations of one rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDerivations {
    pub rule_name: String,
    pub derivations: BTreeSet<Derivation>,
}

impl RuleDerivations {
    /// Deduplicated, sorted conclusions of this rule.
    pub fn conclusions(&self) -> BTreeSet<Triple> {
        self.derivations
            .iter()
            .flat_map(|d| d.conclusions.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicInjectedGraph {
    /// Rules that fired, in the order they were given. Rules without any
    /// derivation are omitted.
    pub per_rule: Vec<RuleDerivations>,
    pub aggregated: KnowledgeGraph,
}

impl LogicInjectedGraph {
    pub fn rule(&self, name: &str) -> Option<&RuleDerivations> {
        self.per_rule.iter().find(|r| r.rule_name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.per_rule.is_empty()
    }

    /// Per-sample output file body:
    /// `rule_name<TAB>head<TAB>relation<TAB>tail[<TAB>disj]`, sorted and
    /// deduplicated, LF line endings.
    pub fn to_tsv(&self) -> String {
        let mut lines = BTreeSet::new();
        for rule in &self.per_rule {
            for d in &rule.derivations {
                for t in &d.conclusions {
                    let mut line = format!("{}\t{}", rule.rule_name, t.to_tsv());
                    if d.disjunctive {
                        line.push_str("\tdisj");
                    }
                    lines.insert(line);
                }
            }
        }
        let mut out = String::new();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

/// Per-relation indexes used by the matcher.
struct GraphIndex<'g> {
    by_relation: HashMap<RelationKind, Vec<&'g Triple>>,
    by_head: HashMap<RelationKind, HashMap<&'g ConceptId, Vec<&'g Triple>>>,
    by_tail: HashMap<RelationKind, HashMap<&'g ConceptId, Vec<&'g Triple>>>,
}

impl<'g> GraphIndex<'g> {
    fn new(graph: &'g KnowledgeGraph) -> Self {
        let mut idx = GraphIndex {
            by_relation: HashMap::new(),
            by_head: HashMap::new(),
            by_tail: HashMap::new(),
        };
        for t in graph.triples() {
            idx.by_relation.entry(t.relation).or_default().push(t);
            idx.by_head.entry(t.relation).or_default().entry(&t.head).or_default().push(t);
            idx.by_tail.entry(t.relation).or_default().entry(&t.tail).or_default().push(t);
        }
        idx
    }

    /// Candidate triples for `atom` given what `binding` already fixes.
    fn candidates(&self, atom: &RuleAtom, binding: &Binding) -> &[&'g Triple] {
        const NONE: &[&Triple] = &[];
        let hit = if let Some(h) = binding.get(atom.arg1) {
            self.by_head.get(&atom.relation).and_then(|m| m.get(h))
        } else if let Some(t) = binding.get(atom.arg2) {
            self.by_tail.get(&atom.relation).and_then(|m| m.get(t))
        } else {
            self.by_relation.get(&atom.relation)
        };
        hit.map_or(NONE, Vec::as_slice)
    }
}

fn bind_atom(binding: &Binding, atom: &RuleAtom, triple: &Triple) -> Option<Binding> {
    let mut next = binding.clone();
    (next.unify(atom.arg1, &triple.head) && next.unify(atom.arg2, &triple.tail)).then_some(next)
}

/// Bindings paired with their premise triples, sorted and deduplicated.
fn match_with_premises(graph: &KnowledgeGraph, rule: &RuleAst) -> BTreeSet<(Binding, Vec<Triple>)> {
    let index = GraphIndex::new(graph);
    let [first, second] = &rule.body.atoms;
    let mut out = BTreeSet::new();
    let empty = Binding::default();
    for t1 in index.candidates(first, &empty) {
        let Some(b1) = bind_atom(&empty, first, t1) else {
            continue;
        };
        for t2 in index.candidates(second, &b1) {
            if let Some(b2) = bind_atom(&b1, second, t2) {
                out.insert((b2, vec![(*t1).clone(), (*t2).clone()]));
            }
        }
    }
    out
}

/// All variable bindings that instantiate both body atoms to graph triples.
pub fn match_body(graph: &KnowledgeGraph, rule: &RuleAst) -> Vec<Binding> {
    let bindings: BTreeSet<Binding> = match_with_premises(graph, rule)
        .into_iter()
        .map(|(b, _)| b)
        .collect();
    bindings.into_iter().collect()
}

/// One derivation per body match. Conclusions that already exist in the
/// graph are kept.
pub fn apply_rule(graph: &KnowledgeGraph, rule: &RuleAst) -> BTreeSet<Derivation> {
    let disjunctive = rule.head.is_disjunctive();
    match_with_premises(graph, rule)
        .into_iter()
        .filter_map(|(binding, premises)| {
            let conclusions = rule
                .head
                .atoms()
                .iter()
                .map(|a| binding.instantiate(a))
                .collect::<Option<Vec<_>>>()?;
            Some(Derivation {
                rule_name: rule.name.clone(),
                binding,
                premises,
                conclusions,
                disjunctive,
            })
        })
        .collect()
}

/// Applies every rule to `graph` and aggregates the conclusions.
pub fn infuse(graph: &KnowledgeGraph, rules: &[RuleAst]) -> LogicInjectedGraph {
    let per_rule: Vec<RuleDerivations> = rules
        .iter()
        .map(|rule| RuleDerivations {
            rule_name: rule.name.clone(),
            derivations: apply_rule(graph, rule),
        })
        .filter(|r| !r.derivations.is_empty())
        .collect();
    let aggregated = build_graph(
        per_rule
            .iter()
            .flat_map(|r| r.derivations.iter())
            .flat_map(|d| d.conclusions.iter().cloned()),
        graph.source_tag(),
    );
    LogicInjectedGraph {
        per_rule,
        aggregated,
    }
}

/// Brute-force conclusions: tries every ordered pair of graph triples
/// against the two body atoms. Shares no matching code with
/// [`apply_rule`].
pub fn oracle_apply(graph: &KnowledgeGraph, rule: &RuleAst) -> Result<BTreeSet<Triple>, EngineError> {
    if graph.len() > ORACLE_MAX_TRIPLES {
        return Err(EngineError::GraphTooLarge {
            size: graph.len(),
            limit: ORACLE_MAX_TRIPLES,
        });
    }
    let triples = graph.to_vec();
    let [a1, a2] = &rule.body.atoms;
    let mut out = BTreeSet::new();
    for t1 in &triples {
        for t2 in &triples {
            if t1.relation != a1.relation || t2.relation != a2.relation {
                continue;
            }
            // Position-wise assignment table: (variable, value) pairs.
            let pairs = [
                (a1.arg1, &t1.head),
                (a1.arg2, &t1.tail),
                (a2.arg1, &t2.head),
                (a2.arg2, &t2.tail),
            ];
            let consistent = pairs
                .iter()
                .all(|(v, c)| pairs.iter().filter(|(w, _)| w == v).all(|(_, d)| d == c));
            if !consistent {
                continue;
            }
            let lookup = |v: Variable| pairs.iter().find(|(w, _)| *w == v).map(|(_, c)| (*c).clone());
            for h in rule.head.atoms() {
                if let (Some(head), Some(tail)) = (lookup(h.arg1), lookup(h.arg2)) {
                    out.insert(Triple {
                        head,
                        relation: h.relation,
                        tail,
                    });
                }
            }
        }
    }
    Ok(out)
}
