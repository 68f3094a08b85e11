mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::SelectionArg;
use error::CliError;

#[derive(Parser)]
#[command(name = "ghplom", version, about = "Generative sampling on learned manifolds")]
struct Cli {
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true, env = "PLOM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Hermite benchmark dataset.
    HermiteGen(HermiteGenArgs),
    /// Fit a model and write it to disk; prints a JSON summary.
    Fit(FitArgs),
    /// Generate realizations from a fitted model plus a diagnostics report.
    Sample(SampleArgs),
    /// Diffusion-maps eigenvalues as CSV (index, eigenvalue).
    Spectrum(EmbedArgs),
    /// Parsimonious residuals as CSV (index, residual, selected).
    Residuals(EmbedArgs),
}

#[derive(Args)]
pub struct HermiteGenArgs {
    /// Dataset id, D0..D7.
    #[arg(long)]
    pub dataset: String,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output matrix; `.csv` selects CSV, anything else plom-bin.
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings shared by every command that embeds data.
#[derive(Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coordinate selection: `top_m=<m>` or `ratio=<theta>`.
    #[arg(long)]
    pub select: Option<SelectionArg>,
    #[arg(long)]
    pub eps_multiplier: Option<f64>,
    #[arg(long)]
    pub kappa: Option<u32>,
    #[arg(long)]
    pub n_eigen: Option<usize>,
    /// GH truncation threshold.
    #[arg(long)]
    pub delta: Option<f64>,
    /// GH kernel scale factor.
    #[arg(long)]
    pub eps2_factor: Option<f64>,
    /// Disable latent whitening before the density estimate.
    #[arg(long)]
    pub no_whiten: bool,
    #[arg(long)]
    pub f0: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct FitArgs {
    /// Training matrix (CSV or plom-bin).
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of realizations.
    #[arg(long)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the realizations and the report; created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Realization file format: csv or plom-bin.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::HermiteGen(a) => commands::hermite_gen(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::Residuals(a) => commands::residuals(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
