//! Spot lexicon concepts in a sentence and join the relation table over
//! them, using the bundled toy lexicon.
//!
//!     cargo run --example match_entities -- "Apremilast treats oral ulcers in Behcet's syndrome."

use medlogic::matcher::{build_context_kg, extract_entities, Lexicon, RelationTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/toy");
    let lexicon = Lexicon::parse(&std::fs::read_to_string(format!("{toy}/lexicon.tsv"))?)?;
    let table = RelationTable::parse(&std::fs::read_to_string(format!("{toy}/relations.tsv"))?)?;
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Relugolix combination therapy treats endometriosis, which is a chronic gynecologic disorder.".into());

    for m in extract_entities(&text, &lexicon) {
        println!("{:>3}..{:<3} {:<30} {}", m.span.start, m.span.end, &text[m.span.clone()], m.concept);
    }
    let kg = build_context_kg(&text, "", &lexicon, &table, "cli");
    println!("\n{} triple(s):", kg.len());
    print!("{}", kg.to_tsv());
    Ok(())
}
