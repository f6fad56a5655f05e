//! Config-driven orchestration: corpus in, per-sample graphs, prompt
//! records, model generations and a metric report out, with a manifest that
//! hashes everything consumed and produced.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! graphs/<id>.tsv          build-kg
//! logic/<id>.tsv           infuse
//! lu_train.jsonl           prep-lu
//! aqa_train.jsonl          prep-aqa
//! aqa_test.jsonl           prep-aqa
//! predictions.jsonl        generate
//! lu_generations.jsonl     generate
//! lu_parsed/<id>.tsv       parse-lu
//! lu_rejects.jsonl         parse-lu
//! report.tsv, report.json  evaluate
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{
    aqa_prompt, emit_aqa_record, emit_lu_record, leaks_answer, load_corpus, lu_prompt, to_jsonl, CorpusKind,
    DatasetError, QaSample, Split, SplitSpec,
};
use crate::engine::{infuse, LogicInjectedGraph};
use crate::gateway::{GenRequest, LlmClient, RetryPolicy, TOKEN_ENV_VAR, URL_ENV_VAR};
use crate::kg::KnowledgeGraph;
use crate::lu::parse_lu_output;
use crate::matcher::{build_context_kg, Lexicon, RelationTable};
use crate::metrics::{evaluate_corpus, read_id_text_jsonl, MetricConfig, WordVectors};
use crate::rules::{parse_rule_file, RuleAst};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Llm(String),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "ConfigError",
            PipelineError::Parse(_) => "ParseError",
            PipelineError::Llm(_) => "LlmError",
            PipelineError::Internal(_) => "InternalError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Parse(_) => 3,
            PipelineError::Llm(_) => 4,
            PipelineError::Internal(_) => 5,
        }
    }

    /// `Class: message` on a single line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("{}: {msg}", self.class())
    }
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => PipelineError::Internal(e.to_string()),
            _ => PipelineError::Parse(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Internal(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    BuildKg,
    Infuse,
    PrepLu,
    PrepAqa,
    Generate,
    ParseLu,
    Evaluate,
    All,
}

impl Command {
    /// Every stage in the order `all` runs them.
    pub const STAGES: [Command; 7] = [
        Command::BuildKg,
        Command::Infuse,
        Command::PrepLu,
        Command::PrepAqa,
        Command::Generate,
        Command::ParseLu,
        Command::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::BuildKg => "build-kg",
            Command::Infuse => "infuse",
            Command::PrepLu => "prep-lu",
            Command::PrepAqa => "prep-aqa",
            Command::Generate => "generate",
            Command::ParseLu => "parse-lu",
            Command::Evaluate => "evaluate",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::STAGES
            .into_iter()
            .chain([Command::All])
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    /// Overridden by `MEDLOGIC_LLM_URL`.
    pub base_url: Option<String>,
    pub aqa_model: String,
    pub lu_model: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            base_url: None,
            aqa_model: "medlogic-aqa".into(),
            lu_model: "medlogic-lu".into(),
            max_new_tokens: 256,
            temperature: 0.0,
            stop: vec!["###".into()],
            max_in_flight: 4,
            timeout_ms: 120_000,
            max_attempts: 5,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub bleu_n: usize,
    pub vectors_path: Option<PathBuf>,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            bleu_n: 4,
            vectors_path: None,
        }
    }
}

fn default_seed() -> u64 {
    SplitSpec::default().seed
}

fn default_ratio() -> f64 {
    SplitSpec::default().train_ratio
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub corpus_kind: CorpusKind,
    pub lexicon_path: PathBuf,
    pub relation_table_path: PathBuf,
    pub rules_path: PathBuf,
    #[serde(default = "default_seed")]
    pub split_seed: u64,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub llm: LlmSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
}

impl PipelineConfig {
    /// Parses JSON; relative paths are taken relative to `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("config: {e}")))?;
        for p in [
            &mut cfg.corpus_path,
            &mut cfg.lexicon_path,
            &mut cfg.relation_table_path,
            &mut cfg.rules_path,
            &mut cfg.output_dir,
        ] {
            *p = base_dir.join(&*p);
        }
        if let Some(v) = &mut cfg.metrics.vectors_path {
            *v = base_dir.join(&*v);
        }
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut files = vec![
            ("corpus_path", &self.corpus_path),
            ("lexicon_path", &self.lexicon_path),
            ("relation_table_path", &self.relation_table_path),
            ("rules_path", &self.rules_path),
        ];
        if let Some(v) = &self.metrics.vectors_path {
            files.push(("metrics.vectors_path", v));
        }
        for (field, path) in files {
            if !path.is_file() {
                return Err(PipelineError::Config(format!("{field}: {} does not exist", path.display())));
            }
        }
        if !(0.0..=1.0).contains(&self.train_ratio) {
            return Err(PipelineError::Config(format!("train_ratio {} outside [0, 1]", self.train_ratio)));
        }
        if !(1..=4).contains(&self.metrics.bleu_n) {
            return Err(PipelineError::Config(format!("metrics.bleu_n {} outside 1..=4", self.metrics.bleu_n)));
        }
        if self.llm.max_in_flight < 1 || self.llm.max_new_tokens < 1 || self.llm.max_attempts < 1 {
            return Err(PipelineError::Config(
                "llm.max_in_flight, llm.max_new_tokens and llm.max_attempts must be at least 1".into(),
            ));
        }
        if !(self.llm.temperature >= 0.0) {
            return Err(PipelineError::Config("llm.temperature must be >= 0".into()));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            seed: self.split_seed,
            train_ratio: self.train_ratio,
        }
    }
}

/// File name for a sample id. Ids that need rewriting get a short hash
/// suffix so distinct ids never collide.
pub fn sample_file_stem(id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if clean == id && !id.is_empty() && !id.starts_with('.') {
        clean
    } else {
        format!("{}-{}", clean.trim_start_matches('.'), &sha256_hex(id.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Hash over the previous stage's chain value and this entry.
    pub chain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub corpus_kind: CorpusKind,
    pub split_seed: u64,
    pub train_ratio: f64,
    pub snippet_join: String,
    pub answer_policy: String,
    pub corpus_sha256: String,
    pub rules_sha256: String,
    pub lexicon_sha256: String,
    pub relation_table_sha256: String,
    pub commands: BTreeMap<String, CommandEntry>,
    pub chain_head: String,
}

impl Manifest {
    fn same_run(&self, other: &Manifest) -> bool {
        let key = |m: &Manifest| {
            (
                m.tool_version.clone(),
                m.split_seed,
                m.train_ratio.to_bits(),
                m.corpus_sha256.clone(),
                m.rules_sha256.clone(),
                m.lexicon_sha256.clone(),
                m.relation_table_sha256.clone(),
            )
        };
        key(self) == key(other)
    }

    /// Recomputes chain values in stage order over the stages present.
    fn rechain(&mut self) {
        let mut prev = sha256_hex(b"medlogic-manifest");
        for stage in Command::STAGES {
            let Some(entry) = self.commands.get_mut(stage.name()) else {
                continue;
            };
            let mut h = Sha256::new();
            h.update(prev.as_bytes());
            h.update(b"\n");
            h.update(stage.name().as_bytes());
            for (tag, list) in [("in", &entry.inputs), ("out", &entry.outputs)] {
                for f in list {
                    h.update(format!("\n{tag}\t{}\t{}", f.path, f.sha256).as_bytes());
                }
            }
            entry.chain = hex::encode(h.finalize());
            prev = entry.chain.clone();
        }
        self.chain_head = prev;
    }
}

/// Lazily loaded inputs plus the hashes of the files they came from.
struct Inputs<'c> {
    config: &'c PipelineConfig,
    samples: OnceLock<Vec<QaSample>>,
    lexicon: OnceLock<Lexicon>,
    table: OnceLock<RelationTable>,
    rules: OnceLock<Vec<RuleAst>>,
    graphs: OnceLock<Vec<KnowledgeGraph>>,
    ligs: OnceLock<Vec<LogicInjectedGraph>>,
    hashes: OnceLock<BTreeMap<&'static str, String>>,
}

fn try_init<'a, T>(cell: &'a OnceLock<T>, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<&'a T, PipelineError> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v))
}

impl<'c> Inputs<'c> {
    fn new(config: &'c PipelineConfig) -> Self {
        Inputs {
            config,
            samples: OnceLock::new(),
            lexicon: OnceLock::new(),
            table: OnceLock::new(),
            rules: OnceLock::new(),
            graphs: OnceLock::new(),
            ligs: OnceLock::new(),
            hashes: OnceLock::new(),
        }
    }

    fn hashes(&self) -> Result<&BTreeMap<&'static str, String>, PipelineError> {
        try_init(&self.hashes, || {
            let c = self.config;
            let mut out = BTreeMap::new();
            let mut files = vec![
                ("corpus", &c.corpus_path),
                ("lexicon", &c.lexicon_path),
                ("relation_table", &c.relation_table_path),
                ("rules", &c.rules_path),
            ];
            if let Some(v) = &c.metrics.vectors_path {
                files.push(("vectors", v));
            }
            for (label, path) in files {
                let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
                out.insert(label, sha256_hex(&bytes));
            }
            Ok(out)
        })
    }

    fn input(&self, label: &'static str) -> Result<FileHash, PipelineError> {
        Ok(FileHash {
            path: label.to_string(),
            sha256: self.hashes()?[label].clone(),
        })
    }

    fn samples(&self) -> Result<&[QaSample], PipelineError> {
        try_init(&self.samples, || {
            Ok(load_corpus(
                self.config.corpus_kind,
                &self.config.corpus_path,
                &self.config.split_spec(),
            )?)
        })
        .map(Vec::as_slice)
    }

    fn lexicon(&self) -> Result<&Lexicon, PipelineError> {
        try_init(&self.lexicon, || {
            let p = &self.config.lexicon_path;
            Lexicon::parse(&read_text(p)?).map_err(|e| PipelineError::Parse(format!("{}: {e}", p.display())))
        })
    }

    fn table(&self) -> Result<&RelationTable, PipelineError> {
        try_init(&self.table, || {
            let p = &self.config.relation_table_path;
            RelationTable::parse(&read_text(p)?).map_err(|e| PipelineError::Parse(format!("{}: {e}", p.display())))
        })
    }

    fn rules(&self) -> Result<&[RuleAst], PipelineError> {
        try_init(&self.rules, || {
            let p = &self.config.rules_path;
            parse_rule_file(&read_text(p)?).map_err(|e| PipelineError::Parse(format!("{}: {e}", p.display())))
        })
        .map(Vec::as_slice)
    }

    fn graphs(&self) -> Result<&[KnowledgeGraph], PipelineError> {
        let (samples, lexicon, table) = (self.samples()?, self.lexicon()?, self.table()?);
        try_init(&self.graphs, || {
            Ok(samples
                .par_iter()
                .map(|s| build_context_kg(&s.question, &s.context, lexicon, table, &s.id))
                .collect())
        })
        .map(Vec::as_slice)
    }

    fn ligs(&self) -> Result<&[LogicInjectedGraph], PipelineError> {
        let (graphs, rules) = (self.graphs()?, self.rules()?);
        try_init(&self.ligs, || Ok(graphs.par_iter().map(|g| infuse(g, rules)).collect()))
            .map(Vec::as_slice)
    }
}

/// is_a is the one relation kind added beyond the seven source relations,
/// so reports say how much of the injected logic rests on it.
fn is_a_note(ligs: &[LogicInjectedGraph]) -> String {
    let derivations = || ligs.iter().flat_map(|l| &l.per_rule).flat_map(|r| &r.derivations);
    let uses_is_a = |d: &&crate::engine::Derivation| {
        d.premises.iter().chain(&d.conclusions).any(|t| t.relation == crate::kg::RelationKind::IsA)
    };
    format!(
        "is_a-dependent derivations = {} of {} over the corpus (is_a is an added relation kind)",
        derivations().filter(uses_is_a).count(),
        derivations().count()
    )
}

/// Collects the files a stage writes.
struct Outputs<'a> {
    root: &'a Path,
    written: Vec<FileHash>,
}

impl<'a> Outputs<'a> {
    fn new(root: &'a Path) -> Self {
        Outputs {
            root,
            written: Vec::new(),
        }
    }

    /// Empties a per-sample subdirectory so files from earlier runs with a
    /// different sample set do not linger.
    fn fresh_dir(&self, rel: &str) -> Result<(), PipelineError> {
        let dir = self.root.join(rel);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))
    }

    fn write(&mut self, rel: String, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(FileHash {
            path: rel,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct IdText<'a> {
    id: &'a str,
    output: &'a str,
}

fn id_text_jsonl<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    rows.into_iter()
        .map(|(id, output)| serde_json::to_string(&IdText { id, output }).expect("serializes") + "\n")
        .collect()
}

/// What a command did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSummary {
    pub command: Command,
    pub outputs: Vec<FileHash>,
}

pub struct Pipeline {
    config: PipelineConfig,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// `jobs` sizes the worker pool; `None` or 0 means available parallelism.
    pub fn new(config: PipelineConfig, jobs: Option<usize>) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .map_err(|e| PipelineError::Internal(format!("worker pool: {e}")))?;
        Ok(Pipeline { config, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run(&self, command: Command) -> Result<Vec<StageSummary>, PipelineError> {
        let stages: Vec<Command> = if command == Command::All {
            Command::STAGES.to_vec()
        } else {
            vec![command]
        };
        let inputs = Inputs::new(&self.config);
        let out_dir = &self.config.output_dir;
        std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
        let mut summaries = Vec::new();
        for stage in stages {
            log::info!("running {stage}");
            let (consumed, produced) = self.pool.install(|| self.run_stage(stage, &inputs))?;
            self.record(stage, &inputs, consumed, produced.clone())?;
            summaries.push(StageSummary {
                command: stage,
                outputs: produced,
            });
        }
        Ok(summaries)
    }

    fn run_stage(&self, stage: Command, inputs: &Inputs) -> Result<(Vec<FileHash>, Vec<FileHash>), PipelineError> {
        let mut out = Outputs::new(&self.config.output_dir);
        let consumed = match stage {
            Command::BuildKg => {
                let (samples, graphs) = (inputs.samples()?, inputs.graphs()?);
                out.fresh_dir("graphs")?;
                for (s, g) in samples.iter().zip(graphs) {
                    out.write(format!("graphs/{}.tsv", sample_file_stem(&s.id)), g.to_tsv().as_bytes())?;
                }
                vec![inputs.input("corpus")?, inputs.input("lexicon")?, inputs.input("relation_table")?]
            }
            Command::Infuse => {
                let (samples, ligs) = (inputs.samples()?, inputs.ligs()?);
                out.fresh_dir("logic")?;
                for (s, lig) in samples.iter().zip(ligs) {
                    out.write(format!("logic/{}.tsv", sample_file_stem(&s.id)), lig.to_tsv().as_bytes())?;
                }
                vec![
                    inputs.input("corpus")?,
                    inputs.input("lexicon")?,
                    inputs.input("relation_table")?,
                    inputs.input("rules")?,
                ]
            }
            Command::PrepLu => {
                let (samples, ligs, rules) = (inputs.samples()?, inputs.ligs()?, inputs.rules()?);
                let records: Vec<_> = samples
                    .par_iter()
                    .zip(ligs)
                    .filter(|(s, _)| s.split == Split::Train)
                    .map(|(s, lig)| emit_lu_record(s, rules, lig))
                    .collect();
                out.write("lu_train.jsonl".into(), to_jsonl(&records).as_bytes())?;
                vec![
                    inputs.input("corpus")?,
                    inputs.input("lexicon")?,
                    inputs.input("relation_table")?,
                    inputs.input("rules")?,
                ]
            }
            Command::PrepAqa => {
                let (samples, rules) = (inputs.samples()?, inputs.rules()?);
                let records: Vec<_> = samples.par_iter().map(|s| emit_aqa_record(s, rules)).collect();
                let leaking: Vec<&str> = records
                    .iter()
                    .filter(|r| leaks_answer(r))
                    .map(|r| r.sample_id.as_str())
                    .collect();
                if !leaking.is_empty() {
                    return Err(PipelineError::Parse(format!(
                        "answer appears verbatim in the AQA prompt for {} sample(s): {}",
                        leaking.len(),
                        leaking.join(", ")
                    )));
                }
                for (file, split) in [("aqa_train.jsonl", Split::Train), ("aqa_test.jsonl", Split::Test)] {
                    let part = samples.iter().zip(&records).filter(|(s, _)| s.split == split).map(|(_, r)| r);
                    out.write(file.into(), to_jsonl(part).as_bytes())?;
                }
                vec![inputs.input("corpus")?, inputs.input("rules")?]
            }
            Command::Generate => {
                self.generate(inputs, &mut out)?;
                vec![inputs.input("corpus")?, inputs.input("rules")?]
            }
            Command::ParseLu => {
                let gen_path = self.require_output("lu_generations.jsonl", Command::Generate)?;
                let generations = read_id_text_jsonl(&gen_path).map_err(|e| PipelineError::Parse(e.to_string()))?;
                out.fresh_dir("lu_parsed")?;
                let mut rejects = String::new();
                for (id, text) in &generations {
                    let parsed = parse_lu_output(text);
                    out.write(format!("lu_parsed/{}.tsv", sample_file_stem(id)), parsed.to_tsv().as_bytes())?;
                    for r in &parsed.rejects {
                        #[derive(Serialize)]
                        struct Reject<'a> {
                            id: &'a str,
                            reject: &'a str,
                        }
                        rejects.push_str(&serde_json::to_string(&Reject { id, reject: r }).expect("serializes"));
                        rejects.push('\n');
                    }
                }
                out.write("lu_rejects.jsonl".into(), rejects.as_bytes())?;
                vec![self.hash_output("lu_generations.jsonl")?]
            }
            Command::Evaluate => {
                let pred_path = self.require_output("predictions.jsonl", Command::Generate)?;
                let gold_path = self.require_output("aqa_test.jsonl", Command::PrepAqa)?;
                let parse = |e: crate::metrics::MetricError| PipelineError::Parse(e.to_string());
                let vectors = match &self.config.metrics.vectors_path {
                    Some(p) => WordVectors::parse(&read_text(p)?).map_err(parse)?,
                    None => {
                        log::warn!("no metrics.vectors_path configured; embedding_average will be 0");
                        WordVectors::default()
                    }
                };
                let report = evaluate_corpus(
                    &read_id_text_jsonl(&pred_path).map_err(parse)?,
                    &read_id_text_jsonl(&gold_path).map_err(parse)?,
                    inputs.lexicon()?,
                    &vectors,
                    &MetricConfig {
                        bleu_n: self.config.metrics.bleu_n,
                    },
                )
                .map_err(parse)?;
                let mut report = report;
                report.notes.push(is_a_note(inputs.ligs()?));
                out.write("report.tsv".into(), report.to_tsv().as_bytes())?;
                out.write("report.json".into(), report.to_json().as_bytes())?;
                let mut consumed = vec![
                    self.hash_output("predictions.jsonl")?,
                    self.hash_output("aqa_test.jsonl")?,
                    inputs.input("corpus")?,
                    inputs.input("lexicon")?,
                    inputs.input("relation_table")?,
                    inputs.input("rules")?,
                ];
                if self.config.metrics.vectors_path.is_some() {
                    consumed.push(inputs.input("vectors")?);
                }
                consumed
            }
            Command::All => unreachable!("expanded by run"),
        };
        Ok((consumed, out.written))
    }

    fn generate(&self, inputs: &Inputs, out: &mut Outputs) -> Result<(), PipelineError> {
        let (samples, rules) = (inputs.samples()?, inputs.rules()?);
        let llm = &self.config.llm;
        let url = std::env::var(URL_ENV_VAR).ok().or_else(|| llm.base_url.clone()).ok_or_else(|| {
            PipelineError::Config(format!("no LLM endpoint: set llm.base_url or {URL_ENV_VAR}"))
        })?;
        let client = LlmClient::new(&url, std::env::var(TOKEN_ENV_VAR).ok())
            .with_timeout(Duration::from_millis(llm.timeout_ms))
            .with_retry(RetryPolicy {
                max_attempts: llm.max_attempts,
                base_delay: Duration::from_millis(llm.base_delay_ms),
                ..RetryPolicy::default()
            });
        let request = |model: &str, prompt: String| GenRequest {
            prompt,
            max_new_tokens: llm.max_new_tokens,
            temperature: llm.temperature,
            model_name: model.to_string(),
            stop: (!llm.stop.is_empty()).then(|| llm.stop.clone()),
        };
        let test: Vec<&QaSample> = samples.iter().filter(|s| s.split == Split::Test).collect();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(|e| PipelineError::Internal(format!("async runtime: {e}")))?;

        let run = |reqs: Vec<GenRequest>, what: &str| -> Result<Vec<String>, PipelineError> {
            let results = runtime.block_on(client.generate_batch(&reqs, llm.max_in_flight));
            let mut texts = Vec::with_capacity(results.len());
            let mut failed = Vec::new();
            for (s, r) in test.iter().zip(results) {
                match r {
                    Ok(g) => texts.push(g.text.trim().to_string()),
                    Err(e) => failed.push(format!("{} ({e})", s.id)),
                }
            }
            if failed.is_empty() {
                Ok(texts)
            } else {
                Err(PipelineError::Llm(format!(
                    "{what} generation failed for {} of {} sample(s): {}",
                    failed.len(),
                    test.len(),
                    failed.join("; ")
                )))
            }
        };

        let answers = run(
            test.iter()
                .map(|s| request(&llm.aqa_model, aqa_prompt(&s.question, &s.context, rules)))
                .collect(),
            "answer",
        )?;
        let triples = run(
            test.iter()
                .zip(&answers)
                .map(|(s, a)| request(&llm.lu_model, lu_prompt(&s.question, &s.context, a, rules)))
                .collect(),
            "logic",
        )?;
        let ids = test.iter().map(|s| s.id.as_str());
        out.write(
            "predictions.jsonl".into(),
            id_text_jsonl(ids.clone().zip(answers.iter().map(String::as_str))).as_bytes(),
        )?;
        out.write(
            "lu_generations.jsonl".into(),
            id_text_jsonl(ids.zip(triples.iter().map(String::as_str))).as_bytes(),
        )?;
        Ok(())
    }

    fn require_output(&self, rel: &str, producer: Command) -> Result<PathBuf, PipelineError> {
        let p = self.config.output_dir.join(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::Config(format!("{} not found; run `{producer}` first", p.display())))
        }
    }

    fn hash_output(&self, rel: &str) -> Result<FileHash, PipelineError> {
        let p = self.config.output_dir.join(rel);
        let bytes = std::fs::read(&p).map_err(|e| io_err(&p, e))?;
        Ok(FileHash {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
        })
    }

    fn record(
        &self,
        stage: Command,
        inputs: &Inputs,
        consumed: Vec<FileHash>,
        produced: Vec<FileHash>,
    ) -> Result<(), PipelineError> {
        let h = inputs.hashes()?;
        let c = &self.config;
        let mut manifest = Manifest {
            tool_version: TOOL_VERSION.to_string(),
            corpus_kind: c.corpus_kind,
            split_seed: c.split_seed,
            train_ratio: c.train_ratio,
            snippet_join: "snippets joined with a single space".into(),
            answer_policy: "first reference answer is the target; the rest are kept as alternates".into(),
            corpus_sha256: h["corpus"].clone(),
            rules_sha256: h["rules"].clone(),
            lexicon_sha256: h["lexicon"].clone(),
            relation_table_sha256: h["relation_table"].clone(),
            commands: BTreeMap::new(),
            chain_head: String::new(),
        };
        let path = c.output_dir.join(MANIFEST_FILE);
        if let Ok(text) = std::fs::read_to_string(&path) {
            match serde_json::from_str::<Manifest>(&text) {
                Ok(old) if old.same_run(&manifest) => manifest.commands = old.commands,
                Ok(_) => log::info!("inputs or settings changed; starting a fresh manifest"),
                Err(e) => log::warn!("{}: unreadable manifest ({e}); replacing it", path.display()),
            }
        }
        manifest.commands.insert(
            stage.name().to_string(),
            CommandEntry {
                inputs: consumed,
                outputs: produced,
                chain: String::new(),
            },
        );
        manifest.rechain();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

/// Loads `config_path`, applies an optional seed override and runs `command`.
pub fn run_pipeline(
    config_path: &Path,
    command: Command,
    jobs: Option<usize>,
    seed: Option<u64>,
) -> Result<Vec<StageSummary>, PipelineError> {
    let mut config = PipelineConfig::load(config_path)?;
    if let Some(s) = seed {
        config.split_seed = s;
    }
    Pipeline::new(config, jobs)?.run(command)
}
