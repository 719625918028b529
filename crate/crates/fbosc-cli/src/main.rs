//! `fbosc`: command-line front end for feedback-oscillator noise analysis.
//!
//! Subcommands wrap the library crate: `inspect` (validation and operating
//! point), `spectrum` (closed-form output spectra over a frequency grid),
//! `simulate` (stochastic delay-loop runs, Welch PSDs, linewidth fits),
//! `verify` (invariant suites), `decompose` (amplifier factorization), and
//! `sweep` (spectra over a parameter range, one CSV per value).
//!
//! Exit codes are stable API: 0 success, 1 verification failure, 2 invalid
//! configuration or arguments, 3 bad frequency grid, 4 simulation failure,
//! 5 spectral fit failure. I/O failures exit with 74.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Base RNG seed when neither `--seed` nor `FBOSC_SEED` is given.
pub const DEFAULT_SEED: u64 = 1;

const LONG_ABOUT: &str = "\
Quantum-noise spectra, linewidths, and uncertainty bounds of feedback \
oscillators, in closed form and by stochastic delay-loop simulation.

Conventions: spectra are symmetrized and double-sided with the Fourier \
kernel e^{+i omega t}; vacuum noise is 1/2 per quadrature. Squeeze values \
given in dB convert as r = ln(10^(dB/20)), so 12 dB -> r ~= 1.3816.

The environment variable FBOSC_SEED (decimal u64) overrides any --seed flag.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration, \
3 bad frequency grid, 4 simulation failure, 5 spectral fit failure, \
74 output I/O error.";

#[derive(Parser)]
#[command(name = "fbosc", version, about = "Feedback-oscillator quantum noise toolkit", long_about = LONG_ABOUT)]
struct Cli {
    /// Cap the number of worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a configuration and print its derived operating point.
    Inspect(InspectArgs),
    /// Evaluate closed-form output spectra over a frequency grid into a CSV.
    Spectrum(SpectrumArgs),
    /// Run the stochastic delay-loop simulator (series, PSDs, linewidth).
    Simulate(SimulateArgs),
    /// Run invariant check suites; exit 0 iff every check passes.
    Verify(VerifyArgs),
    /// Factor a phase-sensitive amplifier (G, g) into gain and squeezer.
    Decompose(DecomposeArgs),
    /// Evaluate spectra over a parameter range, one CSV per value.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct InspectArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Also print the effective 4x4 input covariance as CSV rows
    /// (row-major, quadrature order q0, p0, qG, pG).
    #[arg(long)]
    covariance: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Spacing {
    Log,
    Linear,
}

#[derive(Args, Serialize)]
struct SpectrumArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Lowest grid frequency, rad/s (carrier offset unless --absolute).
    #[arg(long)]
    omega_min: f64,
    /// Highest grid frequency, rad/s.
    #[arg(long)]
    omega_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 512)]
    points: usize,
    /// Treat grid frequencies as absolute instead of carrier offsets.
    #[arg(long)]
    absolute: bool,
    /// Grid spacing; log spacing requires omega-min > 0.
    #[arg(long, value_enum, default_value_t = Spacing::Log)]
    spacing: Spacing,
    /// Output CSV path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum WindowArg {
    Hann,
    Rectangular,
}

impl WindowArg {
    fn to_window(self) -> fbosc_core::sim::Window {
        match self {
            WindowArg::Hann => fbosc_core::sim::Window::Hann,
            WindowArg::Rectangular => fbosc_core::sim::Window::Rectangular,
        }
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Samples per round trip (dt = tau / dt-div); must be >= 8.
    #[arg(long, default_value_t = 16)]
    dt_div: usize,
    /// Total steps per trajectory including warmup; round trips with --startup.
    #[arg(long, default_value_t = 1 << 18)]
    steps: usize,
    /// Round trips discarded before recording (fluctuation runs).
    #[arg(long, default_value_t = 160)]
    warmup_trips: usize,
    /// Base RNG seed; trajectory k uses stream k. FBOSC_SEED overrides.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Number of independent trajectories pooled into PSD/linewidth estimates.
    #[arg(long, default_value_t = 1)]
    trajectories: usize,
    /// Write the (t, q_out, p_out) series CSV (default when nothing else is selected).
    #[arg(long)]
    series: bool,
    /// Also dump the series in the binary format (FBOSCTS1 magic).
    #[arg(long)]
    binary: bool,
    /// Estimate Welch PSDs of both output quadratures into CSVs.
    #[arg(long)]
    psd: bool,
    /// Welch segment length in samples; 0 uses one full-record segment.
    #[arg(long, default_value_t = 0)]
    segment_len: usize,
    /// Welch segment overlap fraction in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// Tapering window for Welch segments.
    #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
    window: WindowArg,
    /// Fit the phase-envelope line and compare with the closed-form width.
    #[arg(long)]
    linewidth: bool,
    /// Lower edge of the linewidth fit band, rad/s (requires --fit-max).
    #[arg(long)]
    fit_min: Option<f64>,
    /// Upper edge of the linewidth fit band, rad/s (requires --fit-min).
    #[arg(long)]
    fit_max: Option<f64>,
    /// Iterate the classical startup map instead of the fluctuation loop.
    #[arg(long)]
    startup: bool,
    /// Initial amplitude for --startup; default draws a small random seed.
    #[arg(long)]
    seed_amplitude: Option<f64>,
    /// Output path prefix.
    #[arg(long, short, default_value = "fbosc-sim")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// Configuration files to check; each may carry a top-level "covariance"
    /// key (4x4 row-major array) overriding the derived input covariance.
    configs: Vec<PathBuf>,
    /// Also check every shipped fixture configuration.
    #[arg(long)]
    all_builtin: bool,
    /// Seed for the randomized sweeps. FBOSC_SEED overrides.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct DecomposeArgs {
    /// Phase-preserving gain G of the amplifier.
    #[arg(long)]
    big_g: f64,
    /// Phase-conjugating gain g of the amplifier; requires G > g >= 0.
    #[arg(long)]
    small_g: f64,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SweepParam {
    /// Out-coupler power reflectivity.
    Eta,
    /// In-coupled single-mode squeeze r0.
    R0,
    /// Ancillary single-mode squeeze rG.
    Rg,
    /// Two-mode squeeze rE.
    Re,
    /// Amplifier squeeze r_s (phase-sensitive amplifier only).
    Rs,
    /// Amplifier gain (g0, g, or G depending on the amplifier variant).
    G,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::R0 => "r0",
            SweepParam::Rg => "rg",
            SweepParam::Re => "re",
            SweepParam::Rs => "rs",
            SweepParam::G => "g",
        }
    }

    fn is_squeeze(self) -> bool {
        matches!(self, SweepParam::R0 | SweepParam::Rg | SweepParam::Re | SweepParam::Rs)
    }
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// Base JSON configuration file.
    config: PathBuf,
    /// Parameter varied across the sweep.
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Interpret squeeze values as dB: r = ln(10^(dB/20)).
    #[arg(long)]
    db: bool,
    /// Lowest loop phase Omega*tau on the (absolute) grid.
    #[arg(long, default_value_t = std::f64::consts::PI - 3.0)]
    omega_tau_min: f64,
    /// Highest loop phase Omega*tau on the grid.
    #[arg(long, default_value_t = std::f64::consts::PI + 3.0)]
    omega_tau_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 512)]
    points: usize,
    /// Output path prefix; files are {prefix}_{param}_{value}.csv.
    #[arg(long, short)]
    out: PathBuf,
}

/// Failure classes mapped onto the stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, arguments, or amplifier parameters (exit 2).
    Config(String),
    /// Empty, unordered, or pole-intersecting frequency grid (exit 3).
    Grid(String),
    /// Simulation failure: instability, bad plan, non-convergence (exit 4).
    Sim(String),
    /// Spectral fit failure: no peak, divergent width, bad band (exit 5).
    Fit(String),
    /// One or more verification checks failed (exit 1).
    VerifyFailed { failed: usize, total: usize },
    /// Filesystem failure while writing outputs (exit 74).
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::VerifyFailed { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Grid(_) => 3,
            CliError::Sim(_) => 4,
            CliError::Fit(_) => 5,
            CliError::Io(_) => 74,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Grid(m) => write!(f, "invalid frequency grid: {m}"),
            CliError::Sim(m) => write!(f, "simulation failed: {m}"),
            CliError::Fit(m) => write!(f, "spectral fit failed: {m}"),
            CliError::VerifyFailed { failed, total } => {
                write!(f, "{failed} of {total} verification checks failed")
            }
            CliError::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Splits simulation errors into the fit family (exit 5) and the rest
/// (exit 4); configuration-shaped causes map to exit 2.
fn map_sim_error(e: fbosc_core::sim::SimError) -> CliError {
    use fbosc_core::sim::SimError;
    match e {
        SimError::BandTooNarrow { .. }
        | SimError::FlatSpectrum { .. }
        | SimError::NonPositivePsd
        | SimError::FitDiverged(_) => CliError::Fit(e.to_string()),
        SimError::Saturation(_) | SimError::ZeroCarrier(_) => CliError::Config(e.to_string()),
        other => CliError::Sim(other.to_string()),
    }
}

/// Resolves the effective RNG seed: `FBOSC_SEED` wins over the flag.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("FBOSC_SEED") {
        Ok(raw) => raw.trim().parse::<u64>().map_err(|_| {
            CliError::Config(format!("FBOSC_SEED must be a decimal u64, got {raw:?}"))
        }),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(CliError::Config(format!("FBOSC_SEED unreadable: {e}"))),
    }
}

/// Restores the default SIGPIPE disposition so that piping into e.g. `head`
/// terminates the process silently (Unix convention) instead of panicking on
/// the first failed print.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore the error path: the pool can only have been built already.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match cli.command {
        Command::Inspect(args) => commands::inspect(args),
        Command::Spectrum(args) => commands::spectrum(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Verify(args) => commands::verify(args),
        Command::Decompose(args) => commands::decompose(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
