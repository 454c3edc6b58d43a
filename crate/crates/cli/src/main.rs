//! `torus-kam`: command-line driver.
//!
//! Exit codes: 0 success, 2 certification failure, 3 configuration error.

mod commands;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Status;
use output::OutDir;
use scenario::Scenario;

#[derive(Parser)]
#[command(name = "torus-kam", version, about = "KAM linearization of perturbed affine Z^2 actions on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML); built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ergodicity, higher rank and Diophantine conditions.
    Check,
    /// Twisted cohomological equation for a seeded right-hand side.
    Solve,
    /// One conjugacy step at every node.
    Step,
    /// The full scheme with parameter exclusion.
    Run,
    /// Resonance exclusion on the parameter interval.
    Exclude,
    /// Stability of the tame estimates under box doubling.
    VerifyEstimates,
    /// Print the reference scenario with every default spelled out.
    Config,
}

const EXIT_CERT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Command::Config = cli.command {
        print!("{}", Scenario::reference_toml());
        return ExitCode::SUCCESS;
    }
    let config_error = |msg: String| {
        eprintln!("configuration error: {msg}");
        ExitCode::from(EXIT_CONFIG)
    };
    let mut scenario = match &cli.config {
        Some(p) => match Scenario::load(p) {
            Ok(s) => s,
            Err(e) => return config_error(e.0),
        },
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    let validated = match scenario.validate() {
        Ok(v) => v,
        Err(e) => return config_error(e.0),
    };
    if cli.threads == 0 {
        return config_error("--threads must be at least 1".into());
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        return config_error(format!("thread pool: {e}"));
    }
    let out = match OutDir::create(&cli.out) {
        Ok(o) => o,
        Err(e) => return config_error(format!("cannot create {}: {e}", cli.out.display())),
    };
    let result = match cli.command {
        Command::Check => commands::check(&scenario, &validated, &out),
        Command::Solve => commands::solve(&scenario, &validated, &out),
        Command::Step => commands::step(&scenario, &validated, &out),
        Command::Run => commands::run(&scenario, &validated, &out),
        Command::Exclude => commands::exclude(&scenario, &validated, &out),
        Command::VerifyEstimates => commands::verify_estimates(&scenario, &out),
        Command::Config => unreachable!(),
    };
    match result.unwrap_or_else(|e| e) {
        Status::Certified => ExitCode::SUCCESS,
        Status::Failed(why) => {
            eprintln!("certification failed: {why}");
            ExitCode::from(EXIT_CERT)
        }
    }
}
