//! QA corpus ingestion and fine-tuning record emission.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::LogicInjectedGraph;
use crate::lu::render_triple_groups;
use crate::rules::{render_rule, RuleAst};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}{pointer}: {message}")]
    Parse {
        path: String,
        pointer: String,
        message: String,
    },
    #[error("{path}{pointer}: missing field {field:?}")]
    MissingField {
        path: String,
        pointer: String,
        field: String,
    },
    #[error("duplicate sample ids: {}", .0.join(", "))]
    DuplicateId(Vec<String>),
}

impl DatasetError {
    pub fn missing_field(&self) -> Option<&str> {
        match self {
            DatasetError::MissingField { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Bioasq,
    Mashqa,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSample {
    pub id: String,
    pub question: String,
    pub context: String,
    pub answer: String,
    /// Further reference answers beyond the first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternate_answers: Vec<String>,
    pub split: Split,
}

/// Seeded shuffle split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_ratio: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 42,
            train_ratio: 0.8,
        }
    }
}

impl SplitSpec {
    /// Split label for each of `n` samples, in input order.
    pub fn assign(&self, n: usize) -> Vec<Split> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        order.shuffle(&mut rng);
        let n_train = ((n as f64) * self.train_ratio).round() as usize;
        let mut splits = vec![Split::Test; n];
        for &i in order.iter().take(n_train.min(n)) {
            splits[i] = Split::Train;
        }
        splits
    }
}

/// A sample as read from disk, before split assignment.
struct RawSample {
    id: String,
    pointer: String,
    question: String,
    context: String,
    answers: Vec<String>,
}

fn read_json(path: &Path) -> Result<Value, DatasetError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: p.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: p,
        pointer: String::new(),
        message: e.to_string(),
    })
}

struct Ctx<'a> {
    path: &'a str,
}

impl Ctx<'_> {
    fn missing(&self, pointer: &str, field: &str) -> DatasetError {
        DatasetError::MissingField {
            path: self.path.to_string(),
            pointer: format!("#{pointer}"),
            field: field.to_string(),
        }
    }

    fn bad(&self, pointer: &str, message: &str) -> DatasetError {
        DatasetError::Parse {
            path: self.path.to_string(),
            pointer: format!("#{pointer}"),
            message: message.to_string(),
        }
    }

    fn array<'v>(&self, v: &'v Value, pointer: &str, field: &str) -> Result<&'v Vec<Value>, DatasetError> {
        match v.get(field) {
            None | Some(Value::Null) => Err(self.missing(pointer, field)),
            Some(Value::Array(a)) => Ok(a),
            Some(_) => Err(self.bad(&format!("{pointer}/{field}"), "expected an array")),
        }
    }

    fn text(&self, v: &Value, pointer: &str, field: &str) -> Result<String, DatasetError> {
        match v.get(field) {
            None | Some(Value::Null) => Err(self.missing(pointer, field)),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            Some(Value::String(_)) => Err(self.missing(pointer, field)),
            Some(_) => Err(self.bad(&format!("{pointer}/{field}"), "expected a string")),
        }
    }

    fn opt_id(&self, v: &Value, pointer: &str) -> Result<Option<String>, DatasetError> {
        match v.get("id") {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(_) => Err(self.bad(&format!("{pointer}/id"), "expected a string id")),
        }
    }

    /// A string, or an array of strings.
    fn strings(&self, v: Option<&Value>, pointer: &str) -> Result<Vec<String>, DatasetError> {
        match v {
            None | Some(Value::Null) => Ok(Vec::new()),
            Some(Value::String(s)) => Ok(vec![s.trim().to_string()]),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, item)| match item {
                    Value::String(s) => Ok(s.trim().to_string()),
                    _ => Err(self.bad(&format!("{pointer}/{i}"), "expected a string")),
                })
                .collect(),
            Some(_) => Err(self.bad(pointer, "expected a string or an array of strings")),
        }
        .map(|v: Vec<String>| v.into_iter().filter(|s| !s.is_empty()).collect())
    }
}

fn finish(
    path: &str,
    raw: Vec<RawSample>,
    split: &SplitSpec,
    answer_field: &str,
) -> Result<Vec<QaSample>, DatasetError> {
    let mut seen = HashSet::new();
    let dups: BTreeSet<String> = raw
        .iter()
        .filter(|r| !seen.insert(r.id.clone()))
        .map(|r| r.id.clone())
        .collect();
    if !dups.is_empty() {
        return Err(DatasetError::DuplicateId(dups.into_iter().collect()));
    }
    let ctx = Ctx { path };
    let splits = split.assign(raw.len());
    raw.into_iter()
        .zip(splits)
        .map(|(r, split)| {
            let mut answers = r.answers.into_iter();
            let answer = answers.next();
            if answer.is_none() && split == Split::Train {
                return Err(ctx.missing(&r.pointer, answer_field));
            }
            Ok(QaSample {
                id: r.id,
                question: r.question,
                context: r.context,
                answer: answer.unwrap_or_default(),
                alternate_answers: answers.collect(),
                split,
            })
        })
        .collect()
}

/// Reads the BioASQ Task-B layout: `{"questions": [{"id", "body",
/// "snippets": [{"text"}], "ideal_answer"}]}`. Snippets are joined with a
/// single space; the first ideal answer is the target.
pub fn load_bioasq(path: &Path, split: &SplitSpec) -> Result<Vec<QaSample>, DatasetError> {
    let doc = read_json(path)?;
    let p = path.display().to_string();
    let ctx = Ctx { path: &p };
    let questions = ctx.array(&doc, "", "questions")?;
    let mut raw = Vec::with_capacity(questions.len());
    for (i, q) in questions.iter().enumerate() {
        let pointer = format!("/questions/{i}");
        let question = ctx.text(q, &pointer, "body")?;
        let snippets = ctx.array(q, &pointer, "snippets")?;
        let mut parts = Vec::with_capacity(snippets.len());
        for (j, s) in snippets.iter().enumerate() {
            parts.push(ctx.text(s, &format!("{pointer}/snippets/{j}"), "text")?);
        }
        if parts.is_empty() {
            return Err(ctx.missing(&pointer, "snippets"));
        }
        let answers = ctx.strings(q.get("ideal_answer"), &format!("{pointer}/ideal_answer"))?;
        raw.push(RawSample {
            id: ctx.opt_id(q, &pointer)?.unwrap_or_else(|| format!("bioasq-{i:05}")),
            pointer,
            question,
            context: parts.join(" "),
            answers,
        });
    }
    finish(&p, raw, split, "ideal_answer")
}

/// Reads the MASHQA layout: `{"data": [{"paragraphs": [{"context", "qas":
/// [{"id", "question", "answers": [{"text"}]}]}]}]}`. Answer text may be a
/// string or a list of sentences, which are joined with a space.
pub fn load_mashqa(path: &Path, split: &SplitSpec) -> Result<Vec<QaSample>, DatasetError> {
    let doc = read_json(path)?;
    let p = path.display().to_string();
    let ctx = Ctx { path: &p };
    let mut raw = Vec::new();
    for (d, article) in ctx.array(&doc, "", "data")?.iter().enumerate() {
        let apointer = format!("/data/{d}");
        for (g, para) in ctx.array(article, &apointer, "paragraphs")?.iter().enumerate() {
            let ppointer = format!("{apointer}/paragraphs/{g}");
            let context = ctx.text(para, &ppointer, "context")?;
            for (k, qa) in ctx.array(para, &ppointer, "qas")?.iter().enumerate() {
                let pointer = format!("{ppointer}/qas/{k}");
                let question = ctx.text(qa, &pointer, "question")?;
                let mut answers = Vec::new();
                if let Some(list) = qa.get("answers").filter(|v| !v.is_null()) {
                    let Value::Array(list) = list else {
                        return Err(ctx.bad(&format!("{pointer}/answers"), "expected an array"));
                    };
                    for (a, ans) in list.iter().enumerate() {
                        let apath = format!("{pointer}/answers/{a}/text");
                        let text = ctx.strings(ans.get("text"), &apath)?.join(" ");
                        if !text.is_empty() {
                            answers.push(text);
                        }
                    }
                }
                raw.push(RawSample {
                    id: ctx
                        .opt_id(qa, &pointer)?
                        .unwrap_or_else(|| format!("mashqa-{:05}", raw.len())),
                    pointer,
                    question,
                    context: context.clone(),
                    answers,
                });
            }
        }
    }
    finish(&p, raw, split, "answers")
}

pub fn load_corpus(kind: CorpusKind, path: &Path, split: &SplitSpec) -> Result<Vec<QaSample>, DatasetError> {
    match kind {
        CorpusKind::Bioasq => load_bioasq(path, split),
        CorpusKind::Mashqa => load_mashqa(path, split),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "LU")]
    Lu,
    #[serde(rename = "AQA")]
    Aqa,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Lu => "LU",
            Stage::Aqa => "AQA",
        })
    }
}

/// One fine-tuning example. Serializes as
/// `{"id": ..., "stage": "LU"|"AQA", "input": ..., "output": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub stage: Stage,
    #[serde(rename = "input")]
    pub input_text: String,
    #[serde(rename = "output")]
    pub output_text: String,
}

fn rules_block(rules: &[RuleAst]) -> String {
    rules.iter().map(render_rule).collect::<Vec<_>>().join("\n")
}

/// Logic-understanding prompt; the model continues after `### Logic Triples:`.
pub fn lu_prompt(question: &str, context: &str, answer: &str, rules: &[RuleAst]) -> String {
    format!(
        "### Rules:\n{}\n### Context:\n{context}\n### Question:\n{question}\n### Answer:\n{answer}\n### Logic Triples:",
        rules_block(rules)
    )
}

/// Answer-generation prompt; the model continues after `### Answer:`.
pub fn aqa_prompt(question: &str, context: &str, rules: &[RuleAst]) -> String {
    format!(
        "### Rules:\n{}\n### Context:\n{context}\n### Question:\n{question}\n### Answer:",
        rules_block(rules)
    )
}

/// Target is the rule-grouped triple listing of `lig`, or `NO_TRIPLES`.
pub fn emit_lu_record(sample: &QaSample, rules: &[RuleAst], lig: &LogicInjectedGraph) -> PromptRecord {
    let conclusions: Vec<_> = lig
        .per_rule
        .iter()
        .map(|r| (r.rule_name.as_str(), r.conclusions()))
        .collect();
    PromptRecord {
        sample_id: sample.id.clone(),
        stage: Stage::Lu,
        input_text: lu_prompt(&sample.question, &sample.context, &sample.answer, rules),
        output_text: render_triple_groups(conclusions.iter().map(|(n, ts)| (*n, ts.iter()))),
    }
}

pub fn emit_aqa_record(sample: &QaSample, rules: &[RuleAst]) -> PromptRecord {
    PromptRecord {
        sample_id: sample.id.clone(),
        stage: Stage::Aqa,
        input_text: aqa_prompt(&sample.question, &sample.context, rules),
        output_text: sample.answer.clone(),
    }
}

/// True when the record's input contains its own target text.
pub fn leaks_answer(record: &PromptRecord) -> bool {
    !record.output_text.is_empty() && record.input_text.contains(&record.output_text)
}

pub fn to_jsonl<'a>(records: impl IntoIterator<Item = &'a PromptRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<'a, W: Write>(mut w: W, records: impl IntoIterator<Item = &'a PromptRecord>) -> std::io::Result<()> {
    w.write_all(to_jsonl(records).as_bytes())
}
