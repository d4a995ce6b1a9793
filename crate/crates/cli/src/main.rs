use std::path::PathBuf;
use std::process::ExitCode;

use audit_alloc::{run_experiment, run_suite, CliError, ExperimentConfig, Suite};
use audit_core::population::{generate_population, save_population, PopulationConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "audit-alloc",
    version,
    about = "Audit selection experiments on weighted taxpayer populations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named scenario suite.
    Suite {
        /// paper-qualitative, solver-oracle, lemma-properties or threshold-sweep
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic population CSV from a population config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn generate(config: &PathBuf, out: &PathBuf) -> audit_alloc::Result<()> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
    let pc: PopulationConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    pc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    save_population(&generate_population(&pc)?, out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => ExperimentConfig::load(config).and_then(|c| {
            let outcome = run_experiment(&c, out)?;
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            Ok(true)
        }),
        Command::Suite { name, out } => name.parse::<Suite>().and_then(|s| {
            let report = run_suite(s, out)?;
            for c in &report.criteria {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(report.passed())
        }),
        Command::Gen { config, out } => generate(config, out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
