//! Scenario runner: loads a config, executes the named experiment, and writes
//! CSV/JSON artifacts. Exit codes: 0 success, 1 check failure, 2 usage or
//! config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ce_core::runner;
use ce_core::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(name = "ce", about = "configuration-ensemble dynamics lab", version)]
struct Cli {
    /// Scenario config (TOML); the built-in standard scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override for randomized corpora.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured ensemble and write a snapshot.
    Evolve,
    /// Measure the classical position and report the conditional state.
    Condition,
    /// Entanglement entropy over the configured (t, a) grid.
    Sweep,
    /// Bracket-algebra isomorphism reports.
    Brackets,
    /// Remote-invariance and strong-separability reports.
    Locality,
    /// The qubit/classical-bit protocol.
    QubitProtocol {
        /// Communicate the bit and apply the local correction.
        #[arg(long)]
        communicate: bool,
    },
    /// Coupled vs uncoupled two-qubit trajectories.
    GravityDemo {
        /// Dimensionless coupling strength.
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
    },
    /// Run the full acceptance checklist and print the pass/fail table.
    Selftest,
}

fn init_threads() {
    if let Ok(v) = std::env::var("CE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => match ScenarioConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ScenarioConfig::standard(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    let outcome = match cli.command {
        Command::Evolve => runner::run_evolve(&cfg, &out).map(|_| true),
        Command::Condition => runner::run_condition(&cfg, &out),
        Command::Sweep => runner::run_sweep(&cfg, &out).map(|_| true),
        Command::Brackets => runner::run_brackets(&cfg, &out),
        Command::Locality => runner::run_locality(&cfg, &out),
        Command::QubitProtocol { communicate } => runner::run_qubit_protocol(communicate, &out),
        Command::GravityDemo { lambda } => runner::run_gravity_demo(lambda, &out),
        Command::Selftest => runner::run_selftest(&cfg, &out),
    };

    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed; see artifacts in {}", out.display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error in scenario `{}`: {e}", cfg.name);
            ExitCode::from(2)
        }
    }
}
