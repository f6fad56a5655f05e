//! Automatic answer-quality metrics and corpus reports.
//!
//! BLEU uses uniform weights, clipped counts and no smoothing. METEOR-lite
//! aligns exact unigram matches only (no stemming, no synonyms), maximizing
//! matches and then minimizing chunks.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{entity_set, Lexicon};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("vector file line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector file line {line}: {message}")]
    VectorFormat { line: usize, message: String },
    #[error("ids do not align; missing predictions: [{}], unexpected predictions: [{}]", .missing.join(", "), .unexpected.join(", "))]
    IdMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

/// Lowercased tokens with boundary punctuation removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.split_whitespace()
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|t| !t.is_empty())
            .collect(),
    )
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram precision `(matched, total)`.
fn modified_precision(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h
        .iter()
        .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// BLEU up to order `n` (1..=4 in reports): geometric mean of clipped
/// precisions times the brevity penalty. Any zero precision gives 0.
pub fn bleu(hyp: &TokenSeq, reference: &TokenSeq, n: usize) -> f64 {
    assert!(n >= 1, "BLEU order must be at least 1");
    if hyp.is_empty() {
        log::warn!("BLEU on an empty hypothesis scores 0");
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (matched, total) = modified_precision(&hyp.0, &reference.0, k);
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c = hyp.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / n as f64).exp()
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1.
pub fn rouge_l(hyp: &TokenSeq, reference: &TokenSeq) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        log::warn!("ROUGE-L on two empty sequences scores 0");
        return 0.0;
    }
    let lcs = lcs_len(&hyp.0, &reference.0);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Matches and chunk count of a METEOR alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Search nodes allowed before the chunk minimization settles for the best
/// alignment found so far. Only inputs with many repeated words get near it.
const ALIGN_NODE_BUDGET: usize = 2_000_000;

struct AlignSearch<'a> {
    hyp: &'a [usize],
    /// Remaining hyp occurrences of each word from position i on.
    suffix: Vec<Vec<usize>>,
    positions: Vec<Vec<usize>>,
    budget: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    nodes: usize,
}

impl AlignSearch<'_> {
    fn run(&mut self, i: usize, prev: Option<(usize, usize)>, chunks: usize) {
        if chunks >= self.best || self.nodes >= ALIGN_NODE_BUDGET {
            return;
        }
        self.nodes += 1;
        if i == self.hyp.len() {
            self.best = chunks;
            return;
        }
        let w = self.hyp[i];
        if self.budget[w] > 0 {
            let continuing = prev.filter(|(pi, _)| pi + 1 == i).map(|(_, pj)| pj + 1);
            let mut order: Vec<usize> = self.positions[w].clone();
            if let Some(next) = continuing {
                if let Some(k) = order.iter().position(|&j| j == next) {
                    order.remove(k);
                    order.insert(0, next);
                }
            }
            for j in order {
                if self.used[j] {
                    continue;
                }
                self.used[j] = true;
                self.budget[w] -= 1;
                let extra = usize::from(continuing != Some(j));
                self.run(i + 1, Some((i, j)), chunks + extra);
                self.budget[w] += 1;
                self.used[j] = false;
            }
        }
        // Leave hyp[i] unmatched only if later occurrences can still use up
        // the word's match budget.
        if self.suffix[i + 1][w] >= self.budget[w] {
            self.run(i + 1, prev, chunks);
        }
    }
}

/// Maximum-match exact unigram alignment with the fewest chunks.
pub fn align(hyp: &[String], reference: &[String]) -> Alignment {
    let mut vocab: HashMap<&str, usize> = HashMap::new();
    let mut h = Vec::with_capacity(hyp.len());
    for s in hyp {
        let n = vocab.len();
        h.push(*vocab.entry(s.as_str()).or_insert(n));
    }
    let mut r = Vec::with_capacity(reference.len());
    for s in reference {
        let n = vocab.len();
        r.push(*vocab.entry(s.as_str()).or_insert(n));
    }
    let v = vocab.len();

    let mut positions = vec![Vec::new(); v];
    for (j, &w) in r.iter().enumerate() {
        positions[w].push(j);
    }
    let mut hyp_count = vec![0usize; v];
    for &w in &h {
        hyp_count[w] += 1;
    }
    let budget: Vec<usize> = (0..v).map(|w| hyp_count[w].min(positions[w].len())).collect();
    let matches: usize = budget.iter().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    let mut suffix = vec![vec![0usize; v]; h.len() + 1];
    for i in (0..h.len()).rev() {
        suffix[i] = suffix[i + 1].clone();
        suffix[i][h[i]] += 1;
    }
    let mut search = AlignSearch {
        hyp: &h,
        suffix,
        positions,
        budget,
        used: vec![false; r.len()],
        best: usize::MAX,
        nodes: 0,
    };
    search.run(0, None, 0);
    Alignment {
        matches,
        chunks: search.best,
    }
}

/// METEOR with exact matching: `Fmean * (1 - 0.5 * (chunks/matches)^3)`,
/// `Fmean = 10PR / (R + 9P)`.
pub fn meteor_lite(hyp: &TokenSeq, reference: &TokenSeq) -> f64 {
    let a = align(&hyp.0, &reference.0);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

/// Set F1 over gazetteer entities; two empty sets agree perfectly.
pub fn entity_f1(hyp_text: &str, ref_text: &str, lexicon: &Lexicon) -> f64 {
    let pred = entity_set(hyp_text, lexicon);
    let gold = entity_set(ref_text, lexicon);
    set_f1(&pred, &gold)
}

pub fn set_f1<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let common = pred.intersection(gold).count();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Word vectors read from `word v1 v2 ... vd` lines.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn parse(text: &str) -> Result<Self, MetricError> {
        let mut out = WordVectors::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| MetricError::VectorFormat {
                        line: line_no,
                        message: format!("{f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(MetricError::VectorFormat {
                    line: line_no,
                    message: "word without components".into(),
                });
            }
            if out.dim == 0 {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(MetricError::DimensionMismatch {
                    line: line_no,
                    expected: out.dim,
                    found: values.len(),
                });
            }
            out.vectors.insert(word.to_lowercase(), values);
        }
        Ok(out)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, MetricError> {
        let mut out = WordVectors::default();
        for (i, (w, v)) in pairs.into_iter().enumerate() {
            if out.dim == 0 {
                out.dim = v.len();
            } else if v.len() != out.dim {
                return Err(MetricError::DimensionMismatch {
                    line: i + 1,
                    expected: out.dim,
                    found: v.len(),
                });
            }
            out.vectors.insert(w, v);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    fn mean(&self, tokens: &TokenSeq) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for v in tokens.0.iter().filter_map(|t| self.get(t)) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

/// Cosine of mean word vectors; out-of-vocabulary tokens are skipped. Not
/// clamped, so it can be negative.
pub fn embedding_average(hyp: &TokenSeq, reference: &TokenSeq, vectors: &WordVectors) -> f64 {
    let (Some(a), Some(b)) = (vectors.mean(hyp), vectors.mean(reference)) else {
        log::warn!("embedding average: a side has no in-vocabulary tokens; scoring 0");
        return 0.0;
    };
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Order used for the headline `bleu` column.
    pub bleu_n: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { bleu_n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: String,
    pub entity_f1: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub embedding_average: f64,
    /// Hypothesis token count.
    pub length: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub entity_f1: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub embedding_average: f64,
    pub a_len: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu_n: usize,
    pub notes: Vec<String>,
    pub per_sample: Vec<SampleScores>,
    pub aggregate: AggregateScores,
}

pub fn score_sample(
    id: &str,
    hyp_text: &str,
    ref_text: &str,
    lexicon: &Lexicon,
    vectors: &WordVectors,
    config: &MetricConfig,
) -> SampleScores {
    let hyp = tokenize(hyp_text);
    let reference = tokenize(ref_text);
    let b = [1, 2, 3, 4].map(|n| bleu(&hyp, &reference, n));
    SampleScores {
        id: id.to_string(),
        entity_f1: entity_f1(hyp_text, ref_text, lexicon),
        bleu: bleu(&hyp, &reference, config.bleu_n),
        rouge_l: rouge_l(&hyp, &reference),
        meteor: meteor_lite(&hyp, &reference),
        embedding_average: embedding_average(&hyp, &reference, vectors),
        length: hyp.len(),
        bleu1: b[0],
        bleu2: b[1],
        bleu3: b[2],
        bleu4: b[3],
    }
}

fn mean(rows: &[SampleScores], f: impl Fn(&SampleScores) -> f64) -> f64 {
    if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(f).sum::<f64>() / rows.len() as f64
    }
}

/// Scores predictions against gold answers, both given as `(id, text)`.
/// Rows follow gold order; every gold id needs exactly one prediction.
pub fn evaluate_corpus(
    predictions: &[(String, String)],
    gold: &[(String, String)],
    lexicon: &Lexicon,
    vectors: &WordVectors,
    config: &MetricConfig,
) -> Result<MetricReport, MetricError> {
    let pred: HashMap<&str, &str> = predictions.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
    let gold_ids: HashSet<&str> = gold.iter().map(|(i, _)| i.as_str()).collect();
    let missing: Vec<String> = gold
        .iter()
        .filter(|(i, _)| !pred.contains_key(i.as_str()))
        .map(|(i, _)| i.clone())
        .collect();
    let unexpected: BTreeSet<String> = predictions
        .iter()
        .filter(|(i, _)| !gold_ids.contains(i.as_str()))
        .map(|(i, _)| i.clone())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() || gold.is_empty() {
        return Err(MetricError::IdMismatch {
            missing,
            unexpected: unexpected.into_iter().collect(),
        });
    }
    let per_sample: Vec<SampleScores> = gold
        .par_iter()
        .map(|(id, reference)| score_sample(id, pred[id.as_str()], reference, lexicon, vectors, config))
        .collect();
    let aggregate = AggregateScores {
        entity_f1: mean(&per_sample, |s| s.entity_f1),
        bleu: mean(&per_sample, |s| s.bleu),
        rouge_l: mean(&per_sample, |s| s.rouge_l),
        meteor: mean(&per_sample, |s| s.meteor),
        embedding_average: mean(&per_sample, |s| s.embedding_average),
        a_len: mean(&per_sample, |s| s.length as f64),
        bleu1: mean(&per_sample, |s| s.bleu1),
        bleu2: mean(&per_sample, |s| s.bleu2),
        bleu3: mean(&per_sample, |s| s.bleu3),
        bleu4: mean(&per_sample, |s| s.bleu4),
    };
    Ok(MetricReport {
        bleu_n: config.bleu_n,
        notes: vec![
            format!("bleu = BLEU-{} with uniform weights and no smoothing", config.bleu_n),
            "meteor = METEOR-lite: exact unigram matches only, no stemming or synonyms".into(),
            "embedding_average = raw cosine of mean word vectors, not clamped".into(),
        ],
        per_sample,
        aggregate,
    })
}

/// Reads `{"id": ..., "output": ...}` JSONL (extra fields ignored).
pub fn read_id_text_jsonl(path: &Path) -> Result<Vec<(String, String)>, MetricError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        output: String,
    }
    let err = |message: String| MetricError::Input {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Row>(l)
                .map(|r| (r.id, r.output))
                .map_err(|e| err(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Scores a prediction file against a gold file.
pub fn evaluate_files(
    pred_path: &Path,
    gold_path: &Path,
    lexicon: &Lexicon,
    vectors: &WordVectors,
    config: &MetricConfig,
) -> Result<MetricReport, MetricError> {
    evaluate_corpus(
        &read_id_text_jsonl(pred_path)?,
        &read_id_text_jsonl(gold_path)?,
        lexicon,
        vectors,
        config,
    )
}

impl MetricReport {
    /// Tab-separated table: `#` note lines, a header, one row per sample and
    /// a final `MEAN` row. Six decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for n in &self.notes {
            out.push_str(&format!("# {n}\n"));
        }
        out.push_str("id\tentity_f1\tbleu\trouge_l\tmeteor\tembedding_average\ta_len\tbleu1\tbleu2\tbleu3\tbleu4\n");
        let row = |id: &str, v: [f64; 10]| {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
            format!("{id}\t{}\n", cells.join("\t"))
        };
        for s in &self.per_sample {
            out.push_str(&row(
                &s.id,
                [
                    s.entity_f1,
                    s.bleu,
                    s.rouge_l,
                    s.meteor,
                    s.embedding_average,
                    s.length as f64,
                    s.bleu1,
                    s.bleu2,
                    s.bleu3,
                    s.bleu4,
                ],
            ));
        }
        let a = &self.aggregate;
        out.push_str(&row(
            "MEAN",
            [
                a.entity_f1,
                a.bleu,
                a.rouge_l,
                a.meteor,
                a.embedding_average,
                a.a_len,
                a.bleu1,
                a.bleu2,
                a.bleu3,
                a.bleu4,
            ],
        ));
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
