//! Seeded random inputs.

#![allow(dead_code)]

use medlogic::kg::{ConceptId, KnowledgeGraph, RelationKind, Triple};
use medlogic::rules::{BodyKind, RuleAst, RuleAtom, RuleBody, RuleHead, Variable};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn concept(i: usize) -> ConceptId {
    ConceptId::parse(&format!("c{i}")).unwrap()
}

/// Up to `max_triples` triples over at most `max_concepts` concepts, relations
/// uniform over the eight kinds.
pub fn graph(rng: &mut impl Rng, max_triples: usize, max_concepts: usize) -> KnowledgeGraph {
    let n_concepts = rng.random_range(1..=max_concepts);
    let n_triples = rng.random_range(0..=max_triples);
    (0..n_triples)
        .map(|_| {
            Triple::new(
                concept(rng.random_range(0..n_concepts)),
                *RelationKind::ALL.choose(rng).unwrap(),
                concept(rng.random_range(0..n_concepts)),
            )
        })
        .collect()
}

pub fn triple(rng: &mut impl Rng, n_concepts: usize) -> Triple {
    Triple::new(
        concept(rng.random_range(0..n_concepts)),
        *RelationKind::ALL.choose(rng).unwrap(),
        concept(rng.random_range(0..n_concepts)),
    )
}

fn atom(rng: &mut impl Rng, vars: &[Variable]) -> RuleAtom {
    RuleAtom::new(
        *RelationKind::ALL.choose(rng).unwrap(),
        *vars.choose(rng).unwrap(),
        *vars.choose(rng).unwrap(),
    )
}

/// A random range-restricted rule with a two-atom body.
pub fn rule(rng: &mut impl Rng, name: &str) -> RuleAst {
    let atoms = [atom(rng, &Variable::ALL), atom(rng, &Variable::ALL)];
    let mut bound: Vec<Variable> = atoms.iter().flat_map(|a| [a.arg1, a.arg2]).collect();
    bound.sort();
    bound.dedup();
    let head = if rng.random_bool(0.3) {
        RuleHead::Or([atom(rng, &bound), atom(rng, &bound)])
    } else {
        RuleHead::Atom(atom(rng, &bound))
    };
    RuleAst {
        name: name.to_string(),
        body: RuleBody {
            kind: if rng.random_bool(0.3) { BodyKind::Or } else { BodyKind::And },
            atoms,
        },
        head,
    }
}

pub fn rule_name(rng: &mut impl Rng) -> String {
    const ALPHA: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
    let len = rng.random_range(0..12);
    let mut s = String::new();
    s.push(*ALPHA.choose(rng).unwrap() as char);
    for _ in 0..len {
        s.push(*REST.choose(rng).unwrap() as char);
    }
    s
}

/// Token list of length `0..=max_len` over a `vocab`-word alphabet; small
/// alphabets force repeats.
pub fn tokens(rng: &mut impl Rng, max_len: usize, vocab: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}
