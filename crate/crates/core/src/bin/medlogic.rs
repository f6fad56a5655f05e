use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use medlogic::pipeline::{run_pipeline, Command};

/// Rule-injected knowledge graph pipeline for medical question answering.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// build-kg, infuse, prep-lu, prep-aqa, generate, parse-lu, evaluate or all
    command: Command,
    /// Pipeline config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to available parallelism
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides split_seed from the config
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("ConfigError: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run_pipeline(&cli.config, cli.command, cli.jobs, cli.seed) {
        Ok(stages) => {
            for s in stages {
                println!("{}: {} file(s) written", s.command, s.outputs.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
