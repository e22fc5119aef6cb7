//! Command line driver: load a scenario file, run it, write its outputs.
//!
//! Exit codes: 0 the run completed and every diagnostic passed (a flagged
//! blow-up still exits 0, with a marker line, since unbounded growth is a
//! legitimate regime); 1 at least one diagnostic failed; 2 usage or
//! configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use selection_core::scenario::{self, Overrides, ScenarioError};
use selection_core::Scheme;

#[derive(Parser)]
#[command(
    name = "selection",
    about = "Simulate selection dynamics on nonnegative measures from scenario files",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its series, snapshots and reports.
    Run {
        /// Scenario file (flat key = value text).
        scenario: PathBuf,
        /// Output directory (defaults to out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the number of grid cells.
        #[arg(long)]
        cells: Option<usize>,
        /// Override the integration scheme.
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
    /// Validate a scenario file without running it.
    Check { scenario: PathBuf },
    /// List the built-in operators with their parameters and constants.
    List,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "exponential" => Ok(Scheme::Exponential),
        "semi_implicit" => Ok(Scheme::SemiImplicit),
        "picard" => Ok(Scheme::Picard),
        other => Err(format!("unknown scheme '{other}' (exponential | semi_implicit | picard)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, ScenarioError> {
    match cli.command {
        Command::Run { scenario: path, out, dt, cells, scheme } => {
            let mut scenario = scenario::load_scenario(&path)?;
            scenario.apply_overrides(Overrides { dt, cells, scheme })?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
            let outcome = scenario::run_scenario(&scenario, &out_dir)?;
            if outcome.blew_up {
                println!("blowup");
            }
            for report in &outcome.reports {
                println!("{}", report.render_line());
            }
            println!("wrote {} file(s) to {}", outcome.files.len(), out_dir.display());
            Ok(if outcome.failed() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Check { scenario: path } => {
            let scenario = scenario::load_scenario(&path)?;
            println!("ok: scenario '{}' is valid", scenario.name);
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            print!("{}", scenario::list_builtins());
            Ok(ExitCode::SUCCESS)
        }
    }
}
