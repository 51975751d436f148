//! Command-line front end for the trust-zone simulator.
//!
//! Three subcommands: `validate` checks a scenario file and reports every
//! problem it finds, `run` executes one and writes the trace and metrics
//! artifacts, and `report` recomputes metrics from a stored trace.
//!
//! Exit codes: 0 success, 1 I/O or usage failure, 2 scenario diagnostics,
//! 3 invariant violation during a checked run.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tzsim_core::metrics::compute_metrics;
use tzsim_core::scenario::{load_scenario, Scenario, ScenarioError};
use tzsim_core::sim::{run, RunOutput, SimError};
use tzsim_core::trace::{read_trace, write_trace};

const EXIT_SCENARIO: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "tzsim", version, about = "Deterministic edge trust-zone simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file without running it.
    Validate(ValidateArgs),
    /// Execute a scenario and emit its trace and metrics.
    Run(RunArgs),
    /// Recompute metrics from a trace written by `run --trace`.
    Report(ReportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the seed baked into the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon in milliseconds (inclusive).
    #[arg(long, default_value_t = 600_000)]
    until: u64,
    /// Write the JSONL event trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write run metrics (pretty JSON) to this file.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Run the invariant suite online and over the finished trace.
    #[arg(long)]
    check_invariants: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// JSONL trace produced by `run --trace`.
    #[arg(long)]
    trace: PathBuf,
    /// Write metrics to this file instead of stdout.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Validate(args) => validate(args),
        Command::Run(args) => execute(args),
        Command::Report(args) => report(args),
    }
}

fn load_file(path: &Path) -> anyhow::Result<Result<Scenario, Vec<ScenarioError>>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(load_scenario(&text))
}

fn validate(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    match load_file(&args.scenario)? {
        Ok(scenario) => {
            println!(
                "ok: {} subscribers, {} events",
                scenario.subscribers.len(),
                scenario.events.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(diagnostics) => {
            for diagnostic in &diagnostics {
                eprintln!("{diagnostic}");
            }
            Ok(ExitCode::from(EXIT_SCENARIO))
        }
    }
}

fn execute(args: RunArgs) -> anyhow::Result<ExitCode> {
    let scenario = match load_file(&args.scenario)? {
        Ok(scenario) => scenario,
        Err(diagnostics) => {
            for diagnostic in &diagnostics {
                eprintln!("{diagnostic}");
            }
            return Ok(ExitCode::from(EXIT_SCENARIO));
        }
    };
    let seed = args.seed.unwrap_or(scenario.config.seed);
    let output = match run(&scenario, seed, args.until, args.check_invariants) {
        Ok(output) => output,
        Err(violation @ SimError::InvariantViolation { .. }) => {
            eprintln!("{violation}");
            return Ok(ExitCode::from(EXIT_INVARIANT));
        }
    };
    if let Some(path) = &args.trace {
        let file = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        write_trace(BufWriter::new(file), &output.trace)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.metrics {
        let json = serde_json::to_string_pretty(&output.metrics)?;
        fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", summary_line(&output));
    Ok(ExitCode::SUCCESS)
}

fn summary_line(output: &RunOutput) -> String {
    let m = &output.metrics;
    format!(
        "final_state={} trace_events={} unauthorized_grants={} forced_reauths={} \
         local_auth_successes={} emergency_call_availability={} audit_completeness={}",
        output.final_state.tz_state.code(),
        output.trace.len(),
        m.unauthorized_grants,
        m.forced_reauths,
        m.local_auth_successes,
        ratio(m.emergency_call_availability, m.availability_vacuous),
        ratio(m.audit_completeness, m.completeness_vacuous),
    )
}

fn ratio(value: f64, vacuous: bool) -> String {
    if vacuous {
        "n/a".to_owned()
    } else {
        format!("{value:.3}")
    }
}

fn report(args: ReportArgs) -> anyhow::Result<ExitCode> {
    let file = fs::File::open(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let events = read_trace(std::io::BufReader::new(file))
        .with_context(|| format!("parsing {}", args.trace.display()))?;
    let metrics = compute_metrics(&events);
    let json = serde_json::to_string_pretty(&metrics)? + "\n";
    match &args.metrics {
        Some(path) => fs::write(path, json)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}
