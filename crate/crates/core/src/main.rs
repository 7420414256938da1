use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cptmag::scenario::{self, ScenarioConfig, ScenarioKind};

/// Run a magnetometry scenario and write its CSV tables and JSON sidecar.
#[derive(Debug, Parser)]
#[command(name = "cptmag", version)]
struct Cli {
    scenario: ScenarioKind,
    /// TOML configuration; an empty file selects all defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn execute(cli: &Cli) -> cptmag::Result<Vec<PathBuf>> {
    let mut cfg = ScenarioConfig::load(&cli.config)?;
    cfg.scenario = cli.scenario;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = cli.runs {
        cfg.runs = runs;
    }
    scenario::run(&cfg)?.write(&cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(1)
        }
    }
}

fn error_line(e: &cptmag::Error) -> String {
    format!("error\tkind={}\tmessage={}", e.kind(), e)
}
