//! Run every stage on the toy corpus against a mock model server and list
//! what was written.
//!
//!     cargo run --example run_pipeline -- [output-dir]

#[path = "../tests/common/mock_llm.rs"]
mod mock_llm;

use medlogic::pipeline::{Command, Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let mock = mock_llm::MockLlm::pipeline();
    let mut config = PipelineConfig::from_json(&std::fs::read_to_string(toy.join("config.json"))?, &toy)?;
    config.llm.base_url = Some(mock.url.clone());
    if let Some(out) = std::env::args().nth(1) {
        config.output_dir = out.into();
    }
    let out = config.output_dir.clone();

    for summary in Pipeline::new(config, None)?.run(Command::All)? {
        println!("{:<10} {} file(s)", summary.command.name(), summary.outputs.len());
    }
    println!("\n{}", std::fs::read_to_string(out.join("report.tsv"))?);
    Ok(())
}
