//! Load the toy BioASQ file, split it and print one fine-tuning record of
//! each kind as JSONL.
//!
//!     cargo run --example prepare_records

use medlogic::dataset::{emit_aqa_record, emit_lu_record, leaks_answer, load_bioasq, to_jsonl, Split, SplitSpec};
use medlogic::engine::infuse;
use medlogic::matcher::{build_context_kg, Lexicon, RelationTable};
use medlogic::rules::builtin_rules;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let lexicon = Lexicon::parse(&std::fs::read_to_string(toy.join("lexicon.tsv"))?)?;
    let table = RelationTable::parse(&std::fs::read_to_string(toy.join("relations.tsv"))?)?;
    let rules = builtin_rules();
    let samples = load_bioasq(&toy.join("bioasq_toy.json"), &SplitSpec::default())?;

    for s in &samples {
        println!("{:<16} {:?}", s.id, s.split);
    }
    let train = samples.iter().find(|s| s.split == Split::Train).expect("toy corpus has a train sample");
    let kg = build_context_kg(&train.question, &train.context, &lexicon, &table, &train.id);
    let lu = emit_lu_record(train, &rules, &infuse(&kg, &rules));
    let aqa = emit_aqa_record(train, &rules);
    assert!(!leaks_answer(&aqa));
    print!("\n{}", to_jsonl([&lu, &aqa]));
    Ok(())
}
