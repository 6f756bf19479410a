//! `nvepr`: simulate, fit and invert single-NV pulsed experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nvepr", version, about = "Single-NV pulsed spin experiment simulator and fitter")]
struct Cli {
    /// TOML run configuration (relative paths also resolve against $NVEPR_CONFIG_DIR).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a photon-count trace.
    Simulate(SimulateArgs),
    /// Fit a trace and write a JSON report.
    Fit(FitArgs),
    /// Recover field strength and tilt from the two ODMR transitions.
    InvertField(InvertArgs),
    /// Evaluate ESEEM modulation and bath decoherence on a τ grid.
    Eseem(EseemArgs),
    /// Fit 1..=max-n coupled spins to a DEER-Rabi trace and pick the best.
    SelectSpins(SelectArgs),
    /// Fit a trace and write plot-ready x, model, data, residual columns.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// pulsed-odmr, rabi, cpmg8, cpmg-deer or deer-rabi
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sequence repetitions (per point unless --averaging total).
    #[arg(long)]
    pub n_avg: Option<u64>,
    /// per-point or total
    #[arg(long)]
    pub averaging: Option<String>,
    /// Write expected counts without shot noise.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Overrides the kind recorded in the trace header.
    #[arg(long)]
    pub kind: Option<String>,
    /// Coupled spins for deer-rabi fits.
    #[arg(long)]
    pub n_spins: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Lower transition, MHz.
    #[arg(long, allow_negative_numbers = true)]
    pub f_minus: f64,
    /// Upper transition, MHz.
    #[arg(long, allow_negative_numbers = true)]
    pub f_plus: f64,
    /// One-sigma error of f-minus, MHz.
    #[arg(long)]
    pub err_minus: Option<f64>,
    /// One-sigma error of f-plus, MHz.
    #[arg(long)]
    pub err_plus: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EseemArgs {
    /// Nucleus labels from the bundled hyperfine table (repeatable).
    #[arg(long = "nucleus")]
    pub nuclei: Vec<String>,
    /// mT
    #[arg(long)]
    pub b0: Option<f64>,
    /// RMS ¹³C bath field, μT.
    #[arg(long)]
    pub b_rms: Option<f64>,
    #[arg(long)]
    pub n_pulses: Option<u32>,
    /// μs
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Include exp(−t/T₂) decay, μs.
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Use the same adjusted-R² parameter count for every model.
    #[arg(long)]
    pub k_fixed: Option<usize>,
    /// Rescale the signal to [0, 1] before fitting.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub n_spins: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let (cfg, _) = config::RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, &a),
        Command::Fit(a) => commands::fit(&cfg, &a),
        Command::InvertField(a) => commands::invert_field(&cfg, &a),
        Command::Eseem(a) => commands::eseem(&cfg, &a),
        Command::SelectSpins(a) => commands::select_spins(&cfg, &a),
        Command::Report(a) => commands::report(&cfg, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nvepr: {e}");
            e.exit_code()
        }
    }
}
