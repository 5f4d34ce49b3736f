//! `dirac-gauge`: config-driven front end to the `dirac_gauge` library.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 non-admissible metric,
//! 4 numerical failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Context, Outcome};
use config::RunConfig;
use error::CliError;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Parser)]
#[command(name = "dirac-gauge", version, about = "Tetrads, gamma fields and Dirac operator gauge experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Multiply every tolerance by this factor.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    /// Seed for `random_samples`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// η-Cholesky factorization of the metric at the sample points.
    Factorize,
    /// Tetrads, gamma matrices and hermitizers for each chart.
    Tetrad,
    /// Cauchy-Green classification of a spatial map.
    ClassifyMap,
    /// Spin lift of a Lorentz matrix or of the inter-chart transformation.
    Lift,
    /// Gauge-equivalence condition residuals between two charts.
    CheckConditions,
    /// Full two-gauge comparison of Hamiltonian and energy spectra.
    GaugeExperiment,
    /// Hamiltonian and energy spectra for one chart.
    Spectrum,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Factorize => "factorize",
            Command::Tetrad => "tetrad",
            Command::ClassifyMap => "classify-map",
            Command::Lift => "lift",
            Command::CheckConditions => "check-conditions",
            Command::GaugeExperiment => "gauge-experiment",
            Command::Spectrum => "spectrum",
        }
    }

    fn run(self, ctx: &Context) -> Result<Outcome, CliError> {
        match self {
            Command::Factorize => commands::factorize(ctx),
            Command::Tetrad => commands::tetrad(ctx),
            Command::ClassifyMap => commands::classify_map(ctx),
            Command::Lift => commands::lift(ctx),
            Command::CheckConditions => commands::check_conditions(ctx),
            Command::GaugeExperiment => commands::gauge_experiment_cmd(ctx),
            Command::Spectrum => commands::spectrum_cmd(ctx),
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !(cli.tol_scale.is_finite() && cli.tol_scale > 0.0) {
        return Err(CliError::Config(format!("--tol-scale must be positive, got {}", cli.tol_scale)));
    }
    RunConfig::parse(&text)
}

fn emit(cli: &Cli, body: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("dirac-gauge: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let tol = config.tolerances.scaled(cli.tol_scale);
    let ctx = Context {
        config: &config,
        tol,
        seed: cli.seed,
    };
    let (result, failure) = match cli.command.run(&ctx) {
        Ok(Outcome { result, failure }) => (Some(result), failure),
        Err(e) if matches!(e, CliError::Config(_)) => {
            eprintln!("dirac-gauge: {e}");
            return ExitCode::from(2);
        }
        Err(e) => (None, Some(e)),
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cli.command.name(),
        "seed": cli.seed,
        "tol_scale": cli.tol_scale,
        "config": config,
        "effective_tolerances": tol,
        "result": result,
        "error": failure.as_ref().map(|e| json!({ "kind": e.kind(), "message": e.message() })),
        "timing": { "elapsed_seconds": start.elapsed().as_secs_f64() },
    });
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = emit(&cli, &body) {
        eprintln!("dirac-gauge: {e}");
        return ExitCode::from(2);
    }
    match failure {
        Some(e) => {
            eprintln!("dirac-gauge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        None => ExitCode::SUCCESS,
    }
}
