use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hri_core::harness::{self, analyze, HarnessError, ReplayOutcome, Scenario, TraceLog};
use tracing_subscriber::EnvFilter;

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "hri-sim", version, about = "Run, replay and report simulated waiting-room scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace, metrics and report.
    Run {
        scenario: PathBuf,
        /// Replace the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: runs/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a scenario and compare against a recorded trace.
    Replay { trace: PathBuf, scenario: PathBuf },
    /// Summarize a recorded trace.
    Report {
        trace: PathBuf,
        /// Print the JSON document instead of the text summary.
        #[arg(long)]
        json: bool,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::ScenarioInvalid { .. } | HarnessError::TraceInvalid { .. } | HarnessError::VersionMismatch { .. } => {
            EXIT_VALIDATION
        }
        HarnessError::Io { .. } | HarnessError::Pipeline(_) | HarnessError::Store(_) => EXIT_IO,
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let mut s = Scenario::load(path)?;
    harness::apply_env(&mut s.config);
    Ok(s)
}

fn execute(cmd: Command) -> Result<u8, HarnessError> {
    match cmd {
        Command::Run { scenario, seed, out } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let outcome = harness::run(&s)?;
            let dir = out.unwrap_or_else(|| Path::new("runs").join(&s.name));
            harness::write_outputs(&outcome, &dir)?;
            print!("{}", outcome.report.to_text());
            println!("outputs written to {}", dir.display());
            Ok(0)
        }
        Command::Replay { trace, scenario } => {
            let log = TraceLog::load(&trace)?;
            let s = load_scenario(&scenario)?;
            match harness::replay(&log, &s)? {
                ReplayOutcome::Match { events } => {
                    println!("replay ok: {events} events identical");
                    Ok(0)
                }
                ReplayOutcome::Diverged(d) => {
                    println!("diverged at line {} (event {})", d.line, d.index);
                    println!("  recorded: {}", d.expected.as_deref().unwrap_or("<end of trace>"));
                    println!("  replayed: {}", d.actual.as_deref().unwrap_or("<end of trace>"));
                    Ok(EXIT_DIVERGENCE)
                }
            }
        }
        Command::Report { trace, json } => {
            let report = analyze(&TraceLog::load(&trace)?);
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            Ok(0)
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("{}: ok ({} actors, {} ms)", s.name, s.actors.len(), s.duration_ms);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
