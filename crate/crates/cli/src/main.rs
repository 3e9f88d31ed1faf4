//! `seppnet`: simulate, fit and analyse saturated self-exciting Poisson
//! networks from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 input error, 4 numeric failure.
//! Failures print one line `error: <CODE>: <message>` on stderr.

mod args;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use manifest::{sidecar, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(seppnet::Error),
}

impl From<seppnet::Error> for CliError {
    fn from(e: seppnet::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(seppnet::Error::Numeric(format!("serialization failed: {e}")))
    }
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Core(e) => e.code(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(seppnet::Error::Parameter(_)) => 2,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "seppnet", version, about = "Saturated self-exciting Poisson point processes on networks")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a ground-truth influence matrix and write it as a model.
    Design(commands::DesignArgs),
    /// Simulate counts from a model.
    Simulate(commands::SimulateArgs),
    /// Regularized maximum-likelihood fit of a model to counts.
    Fit(commands::FitArgs),
    /// Log-likelihood of counts under a model.
    Eval(commands::EvalArgs),
    /// Theoretical constants and learning-rate bound of a model.
    Theory(commands::TheoryArgs),
    /// κ over an (a_max, Ũ) grid.
    Heatmap(commands::HeatmapArgs),
    /// Estimation-error sweep over a design parameter and T.
    Sweep(commands::SweepArgs),
    /// Fraction of accurate fits over an (a_max, Ũ) grid.
    Phase(commands::PhaseArgs),
    /// Bin a timestamped event log into counts.
    Discretize(commands::DiscretizeArgs),
    /// Spectral clustering of the network of a model.
    Cluster(commands::ClusterArgs),
}

/// Options shared by every subcommand that writes a file.
#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Output path; a `<out>.manifest.json` sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a subcommand produced.
pub struct Outcome {
    /// Main output, written to `--out` or stdout.
    pub main: Vec<u8>,
    /// Additional files `(path, contents)`.
    pub extra: Vec<(PathBuf, Vec<u8>)>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("error: E_USAGE: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e.message().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let (name, out, outcome) = match cli.command {
        Command::Design(a) => ("design", a.output.out.clone(), commands::design(a)?),
        Command::Simulate(a) => ("simulate", a.output.out.clone(), commands::simulate(a)?),
        Command::Fit(a) => ("fit", a.output.out.clone(), commands::fit(a)?),
        Command::Eval(a) => ("eval", a.output.out.clone(), commands::eval(a)?),
        Command::Theory(a) => ("theory", a.output.out.clone(), commands::theory(a)?),
        Command::Heatmap(a) => ("heatmap", a.output.out.clone(), commands::heatmap(a)?),
        Command::Sweep(a) => ("sweep", a.output.out.clone(), commands::sweep(a)?),
        Command::Phase(a) => ("phase", a.output.out.clone(), commands::phase(a)?),
        Command::Discretize(a) => ("discretize", a.output.out.clone(), commands::discretize(a)?),
        Command::Cluster(a) => ("cluster", a.output.out.clone(), commands::cluster(a)?),
    };
    let Some(out) = out else {
        use std::io::Write;
        std::io::stdout().write_all(&outcome.main)?;
        return Ok(());
    };
    std::fs::write(&out, &outcome.main)?;
    let mut outputs = vec![out.clone()];
    for (path, contents) in &outcome.extra {
        std::fs::write(path, contents)?;
        outputs.push(path.clone());
    }
    let manifest = RunManifest {
        tool: "seppnet",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        argv,
        seed: outcome.seed,
        config: outcome.config,
        inputs: outcome.inputs,
        outputs,
        summary: outcome.summary,
        threads: rayon::current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    std::fs::write(sidecar(&out), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
