//! `pdwatch` command-line interface.

pub mod commands;
pub mod config;
pub mod control;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status 2: bad configuration or arguments. Exit status 1: runtime failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pdwatch", version, about = "Swept-spectrum partial-discharge monitor")]
pub struct Cli {
    /// TOML configuration file (also read from PDWATCH_CONFIG).
    #[arg(long, global = true, env = "PDWATCH_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the band, print one line per window and persist detections.
    Scan(ScanArgs),
    /// Convert every .iqf file in a directory to CSV.
    Decode(DecodeArgs),
    /// Detection probability tables for an intermittent emitter.
    Analyze(AnalyzeArgs),
    /// Run the remote artifact store.
    Serve(ServeArgs),
    /// Upload new detections to the remote store.
    Sync(SyncArgs),
    /// Render a scene through the simulated front end into an .iqf file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockKind {
    /// Real time; each window takes its dwell.
    System,
    /// Virtual time; sweeps run as fast as the DSP allows.
    Sim,
}

#[derive(Debug, Args)]
pub struct PlanFlags {
    /// First window center, Hz.
    #[arg(long)]
    pub f_start: Option<f64>,
    /// Last window center limit, Hz.
    #[arg(long)]
    pub f_stop: Option<f64>,
    /// Window step, Hz.
    #[arg(long)]
    pub step: Option<f64>,
    /// Analysed span per window, Hz.
    #[arg(long)]
    pub span: Option<f64>,
    /// Seconds per window.
    #[arg(long)]
    pub dwell: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold_dbm: Option<f64>,
    #[arg(long)]
    pub n_fft: Option<usize>,
    /// Front-end complex sample rate, samples/s.
    #[arg(long)]
    pub iq_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Stop after this many complete sweeps.
    #[arg(long, conflicts_with = "forever")]
    pub iterations: Option<usize>,
    /// Sweep until interrupted.
    #[arg(long)]
    pub forever: bool,
    /// Emitter scene TOML for the simulated front end.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Serve the scan control endpoint on this address.
    #[arg(long)]
    pub control_bind: Option<std::net::SocketAddr>,
    #[arg(long, value_enum, default_value_t = ClockKind::System)]
    pub clock: ClockKind,
    /// Print only per-sweep summaries, not per-window lines.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub plan: PlanFlags,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Mean pulse rate, pulses/s (Poisson arrivals).
    #[arg(long, default_value_t = 100.0, conflicts_with = "period")]
    pub rate: f64,
    /// Fixed pulse period in seconds instead of Poisson arrivals.
    #[arg(long)]
    pub period: Option<f64>,
    /// Seconds per window.
    #[arg(long, default_value_t = 0.010)]
    pub dwell: f64,
    #[arg(long, default_value_t = 61)]
    pub windows: usize,
    #[arg(long, default_value_t = 1)]
    pub sweeps: usize,
    /// Retune overhead per window, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub overhead: f64,
    /// Per-visit detection probability.
    #[arg(long, default_value_t = 1.0)]
    pub p_single: f64,
    #[arg(long, default_value_t = 0.99)]
    pub target_p: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    /// Storage directory for the service.
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long)]
    pub public_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct SyncArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub remote_url: Option<String>,
    #[arg(long)]
    pub token: Option<String>,
    /// Exit after one watch-and-upload pass.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Tuned center frequency, Hz.
    #[arg(long)]
    pub center: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the time-sequence CSV next to the .iqf.
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub plan: PlanFlags,
}

/// Parse arguments, run the subcommand and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pdwatch: {e}");
            e.exit_code()
        }
    }
}
