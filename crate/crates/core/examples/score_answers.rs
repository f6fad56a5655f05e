//! Score a hypothesis against a reference with every metric in the report.
//!
//!     cargo run --example score_answers -- "warfarin with aspirin raises bleeding risk" \
//!         "Combining warfarin with aspirin roughly doubles the chance of major bleeding."

use medlogic::matcher::Lexicon;
use medlogic::metrics::{score_sample, MetricConfig, WordVectors};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/toy");
    let lexicon = Lexicon::parse(&std::fs::read_to_string(format!("{toy}/lexicon.tsv"))?)?;
    let vectors = WordVectors::parse(&std::fs::read_to_string(format!("{toy}/vectors.txt"))?)?;
    let mut args = std::env::args().skip(1);
    let hyp = args.next().unwrap_or_else(|| "warfarin with aspirin raises bleeding risk".into());
    let reference = args
        .next()
        .unwrap_or_else(|| "Combining warfarin with aspirin roughly doubles the chance of major bleeding.".into());

    let s = score_sample("demo", &hyp, &reference, &lexicon, &vectors, &MetricConfig::default());
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(())
}
