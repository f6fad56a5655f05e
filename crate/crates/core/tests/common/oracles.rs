//! Straight-from-the-definition reference implementations. Slow on purpose.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use medlogic::kg::{ConceptId, KnowledgeGraph, Triple};
use medlogic::rules::{RuleAst, Variable};

/// Rule conclusions by trying every assignment of X, Y, Z over the graph's
/// concepts.
pub fn assignment_conclusions(graph: &KnowledgeGraph, rule: &RuleAst) -> BTreeSet<Triple> {
    let concepts: BTreeSet<&ConceptId> = graph.triples().flat_map(|t| [&t.head, &t.tail]).collect();
    let mut out = BTreeSet::new();
    for x in &concepts {
        for y in &concepts {
            for z in &concepts {
                let val = |v: Variable| match v {
                    Variable::X => (*x).clone(),
                    Variable::Y => (*y).clone(),
                    Variable::Z => (*z).clone(),
                };
                let holds = rule
                    .body
                    .atoms
                    .iter()
                    .all(|a| graph.contains(&Triple::new(val(a.arg1), a.relation, val(a.arg2))));
                if holds {
                    for a in rule.head.atoms() {
                        out.insert(Triple::new(val(a.arg1), a.relation, val(a.arg2)));
                    }
                }
            }
        }
    }
    out
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *m.entry(tokens[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

pub fn bleu(hyp: &[String], reference: &[String], n: usize) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let h = ngrams(hyp, k);
        let r = ngrams(reference, k);
        let total: usize = h.values().sum();
        let clipped: usize = h.iter().map(|(g, c)| (*c).min(*r.get(g).unwrap_or(&0))).sum();
        if clipped == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / n as f64).exp()
}

pub fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn rouge_l(hyp: &[String], reference: &[String]) -> f64 {
    let l = lcs(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / hyp.len() as f64, l / reference.len() as f64);
    2.0 * p * r / (p + r)
}

/// `(matches, chunks)` over every one-to-one exact alignment: most matches,
/// then fewest chunks.
pub fn best_alignment(hyp: &[String], reference: &[String]) -> (usize, usize) {
    fn chunks(pairs: &[(usize, usize)]) -> usize {
        let mut n = 0;
        for (k, &(h, r)) in pairs.iter().enumerate() {
            if k == 0 || !(h == pairs[k - 1].0 + 1 && r == pairs[k - 1].1 + 1) {
                n += 1;
            }
        }
        n
    }
    fn go(
        hyp: &[String],
        reference: &[String],
        i: usize,
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == hyp.len() {
            let cand = (pairs.len(), chunks(pairs));
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                *best = cand;
            }
            return;
        }
        go(hyp, reference, i + 1, used, pairs, best);
        for j in 0..reference.len() {
            if !used[j] && reference[j] == hyp[i] {
                used[j] = true;
                pairs.push((i, j));
                go(hyp, reference, i + 1, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    go(hyp, reference, 0, &mut vec![false; reference.len()], &mut Vec::new(), &mut best);
    best
}

pub fn meteor(hyp: &[String], reference: &[String]) -> f64 {
    let (m, ch) = best_alignment(hyp, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (ch as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

pub fn set_f1<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let tp = pred.intersection(gold).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let (p, r) = (tp / pred.len() as f64, tp / gold.len() as f64);
    2.0 * p * r / (p + r)
}

/// Cosine of per-side mean vectors; 0 when a side has no known token.
pub fn embedding_average(hyp: &[String], reference: &[String], vectors: &HashMap<String, Vec<f64>>) -> f64 {
    let mean = |ts: &[String]| -> Option<Vec<f64>> {
        let known: Vec<&Vec<f64>> = ts.iter().filter_map(|t| vectors.get(t)).collect();
        if known.is_empty() {
            return None;
        }
        let dim = known[0].len();
        Some((0..dim).map(|d| known.iter().map(|v| v[d]).sum::<f64>() / known.len() as f64).collect())
    };
    let (Some(a), Some(b)) = (mean(hyp), mean(reference)) else {
        return 0.0;
    };
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
