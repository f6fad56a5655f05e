//! Parse the shipped rule file, apply it to a small graph and print the
//! logic-understanding target along with its parsed form.
//!
//!     cargo run --example infuse_rules

use medlogic::engine::infuse;
use medlogic::kg::{build_graph, Triple};
use medlogic::lu::{parse_lu_output, render_triple_groups};
use medlogic::rules::parse_rule_file;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
    let rules = parse_rule_file(&std::fs::read_to_string(format!("{root}/rules/medlogic6.rules"))?)?;
    let graph = build_graph(
        [
            "relugolix\ttreat\tendometriosis",
            "endometriosis\tis_a\tgynecologic_disorder",
            "relugolix\tprevent\testradiol",
            "estradiol\tcauses\tpelvic_pain",
        ]
        .iter()
        .map(|l| Triple::from_tsv(l))
        .collect::<Result<Vec<_>, _>>()?,
        "demo",
    );

    let lig = infuse(&graph, &rules);
    print!("{}", lig.to_tsv());

    let groups: Vec<_> = lig.per_rule.iter().map(|r| (r.rule_name.as_str(), r.conclusions())).collect();
    let listing = render_triple_groups(groups.iter().map(|(n, ts)| (*n, ts.iter())));
    println!("\n{listing}\n");
    let parsed = parse_lu_output(&listing);
    println!("parsed back {} triple(s), {} reject(s)", parsed.triple_count(), parsed.rejects.len());
    Ok(())
}
