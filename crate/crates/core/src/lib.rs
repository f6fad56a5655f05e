//! Rule-injected medical knowledge graphs for abstractive question
//! answering.
//!
//! The crate covers the data side of a two-stage fine-tuning setup:
//!
//! - [`kg`]: concepts, relations, triples and canonically ordered graphs
//! - [`rules`]: a small rule language and the six built-in medical rules
//! - [`engine`]: single-pass rule application with a brute-force oracle
//! - [`matcher`]: gazetteer entity spotting and relation-table joins
//! - [`dataset`]: BioASQ / MASHQA ingestion and JSONL prompt records
//! - [`lu`]: the `Rule of <Name>: [(h, r, t), ...]` triple listing format
//! - [`metrics`]: BLEU, ROUGE-L, METEOR-lite, entity F1, embedding average
//! - [`gateway`]: chat-completions client with retries and bounded fan-out
//! - [`pipeline`]: config-driven orchestration behind the `medlogic` binary

pub mod dataset;
pub mod engine;
pub mod gateway;
pub mod kg;
pub mod lu;
pub mod matcher;
pub mod rules;
pub mod metrics;
pub mod pipeline;
