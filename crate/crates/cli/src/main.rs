//! `seom`: command-line front end for the modulator toolkit.

mod commands;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use seom_core::config::Config;

/// Configuration or usage problem; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Globals {
    /// Configuration file (TOML, unit-suffixed quantities).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Emission format for tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Seed for all randomness; drawn from entropy and printed when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Also write an SVG line chart (response, efficiency, tradeoff).
    #[arg(long, global = true)]
    pub plot: bool,
}

impl Globals {
    pub fn config_display(&self) -> String {
        self.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

/// Operating-point overrides for the eye simulation. Quantities take unit
/// suffixes, e.g. `--v-pp "2.2 mV"`.
#[derive(Debug, Args)]
pub struct EyeArgs {
    /// Number of simulated bits (at least 1000).
    #[arg(long)]
    pub n_bits: Option<usize>,
    /// Write per-bit photon counts to eye_samples.csv.
    #[arg(long)]
    pub samples: bool,
    /// Replace the configured bias with the SNR-optimal bias.
    #[arg(long)]
    pub optimize_bias: bool,
    /// Operating temperature.
    #[arg(long, value_name = "QUANTITY")]
    pub temperature: Option<String>,
    /// Optical power into the modulator.
    #[arg(long, value_name = "QUANTITY")]
    pub p_opt_in: Option<String>,
    /// Static MZI phase; 0 is the null.
    #[arg(long, value_name = "QUANTITY")]
    pub bias_phase: Option<String>,
    /// Peak-to-peak drive voltage.
    #[arg(long, value_name = "QUANTITY")]
    pub v_pp: Option<String>,
    /// Bit rate, e.g. "1 Gbps".
    #[arg(long, value_name = "QUANTITY")]
    pub bit_rate: Option<String>,
    /// Drive frequency.
    #[arg(long, value_name = "QUANTITY")]
    pub f_mod: Option<String>,
    /// Peak received optical power.
    #[arg(long, value_name = "QUANTITY")]
    pub p_peak: Option<String>,
    /// Half-wave voltage; defaults to VπL / arm length.
    #[arg(long, value_name = "QUANTITY")]
    pub v_pi: Option<String>,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// EO frequency response per temperature and 3 dB bandwidths.
    Response,
    /// Transduction efficiency versus modulation length.
    Efficiency,
    /// Shot-noise-limited eye: analytic and Monte Carlo SNR/BER.
    Eye(EyeArgs),
    /// Extract index, loss and optical-index parameters from traces.
    Fit,
    /// Design-space sweep defined in the [sweep] section.
    Sweep,
    /// Normal-metal Vπ / bandwidth trade-off boundary.
    Tradeoff,
}

#[derive(Debug, Parser)]
#[command(name = "seom", version, about = "Superconducting electro-optic modulator toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    globals: Globals,
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli.globals.config.as_ref().ok_or_else(|| anyhow!(ConfigError("--config <PATH> is required".into())))?;
    let cfg = Config::load(path).map_err(|e| anyhow!(ConfigError(format!("{}: {e}", path.display()))))?;
    let command = match cli.command {
        Command::Response => "response",
        Command::Efficiency => "efficiency",
        Command::Eye(_) => "eye",
        Command::Fit => "fit",
        Command::Sweep => "sweep",
        Command::Tradeoff => "tradeoff",
    };
    let seed = match (&cli.command, cli.globals.seed) {
        (Command::Eye(_), None) => {
            let s = rand::random::<u64>();
            eprintln!("seed: {s}");
            Some(s)
        }
        (_, s) => s,
    };
    let run = commands::Run { cfg, globals: &cli.globals, command, seed };
    match &cli.command {
        Command::Response => commands::response(&run),
        Command::Efficiency => commands::efficiency(&run),
        Command::Eye(args) => commands::eye(&run, args),
        Command::Fit => commands::fit(&run),
        Command::Sweep => commands::sweep(&run),
        Command::Tradeoff => commands::tradeoff(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.globals.quiet { log::LevelFilter::Off } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_problem = e.chain().any(|c| {
                c.downcast_ref::<ConfigError>().is_some()
                    || matches!(
                        c.downcast_ref::<seom_core::Error>(),
                        Some(seom_core::Error::Config { .. } | seom_core::Error::Unit(_))
                    )
            });
            ExitCode::from(if config_problem { 2 } else { 1 })
        }
    }
}
