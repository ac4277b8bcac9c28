//! Command-line front end for the event forecasting library. Each
//! subcommand wraps one pipeline stage and writes its artifacts atomically;
//! rerunning any command with the same configuration and seed reproduces
//! the output files byte for byte.

mod cmds;
mod config;
mod out;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

/// Failures split into the documented exit classes: usage errors exit 1,
/// data and validation errors exit 2, fit and convergence errors exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(lobcast::Error),
}

impl From<lobcast::Error> for CliError {
    fn from(e: lobcast::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(lobcast::Error::Io(e))
    }
}

fn core_exit_code(e: &lobcast::Error) -> u8 {
    use lobcast::error::Stage;
    match e {
        lobcast::Error::UnstableModel(_) | lobcast::Error::TuningFailed => 3,
        lobcast::Error::Scenario { stage, .. } => match stage {
            Stage::Validation => 2,
            _ => 3,
        },
        _ => 2,
    }
}

#[derive(Parser)]
#[command(
    name = "lobcast",
    version,
    about = "Limit order book event forecasting: timing models, return models, backtests"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags accepted by every subcommand. Each overrides the same-named key of
/// the config file given by `--config` or the `LOBCAST_CONFIG` env var.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// LOB snapshot CSV file
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Flat key-value config file; flags win over its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Predictor: oracle, naive, ma, or hawkes
    #[arg(long, global = true)]
    predictor: Option<String>,
    /// Base seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario anchor, seconds since epoch; auto-selected when omitted
    #[arg(long, global = true, allow_hyphen_values = true)]
    t0: Option<f64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table file format: csv or json
    #[arg(long, global = true)]
    format: Option<String>,
    /// Book levels per side in the data file
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// Imbalance depth, levels aggregated per side
    #[arg(long, global = true)]
    depth: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a raw LOB CSV, drop bad records, and re-emit it normalized
    Ingest,
    /// Decile correlation, daily OHLC rows, and a dataset summary
    Analyze,
    /// Fit the self-exciting timing model and write its parameters
    FitHawkes,
    /// Roll one predictor over a simulation window and save its event-time
    /// predictions
    Forecast,
    /// One backtest scenario: timing forecast, return model, paper trading
    Backtest,
    /// Backtest all four predictors over sampled scenario anchors
    Montecarlo {
        /// Number of scenario anchors to sample
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Evaluate a hyperparameter grid by mean absolute event-time error
    Tune {
        /// CSV file of candidate hyperparameter rows
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Generate a synthetic LOB dataset
    Synth(SynthArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum TimingArg {
    /// Independent gaps: a floor plus an exponential tail
    Renewal,
    /// Self-exciting event times
    Hawkes,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReturnsArg {
    /// Memoryless gain from imbalance to return
    Linear,
    /// Second-order low-pass response to the imbalance path
    Filter,
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    /// Span of the generated stream, seconds
    #[arg(long, default_value_t = 3600.0)]
    duration_secs: f64,
    /// First event time, seconds since epoch
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    /// Event timing process
    #[arg(long, value_enum, default_value_t = TimingArg::Renewal)]
    timing: TimingArg,
    /// Baseline intensity, events per second
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    /// Excitation jump per event
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Excitation decay rate per second
    #[arg(long, default_value_t = 1.2)]
    beta: f64,
    /// Smallest inter-event gap, seconds; defaults to 1 for renewal timing
    /// and 0 for self-exciting timing
    #[arg(long)]
    min_gap: Option<f64>,
    /// Mean of the exponential gap tail for renewal timing, seconds
    #[arg(long, default_value_t = 0.1)]
    mean_extra: f64,
    /// Imbalance-to-return map
    #[arg(long, value_enum, default_value_t = ReturnsArg::Linear)]
    returns: ReturnsArg,
    /// Steady-state return per unit imbalance
    #[arg(long, default_value_t = -2e-3, allow_hyphen_values = true)]
    gain: f64,
    /// Standard deviation of the additive return noise
    #[arg(long, default_value_t = 2e-4)]
    noise_std: f64,
    /// Lag-one autocorrelation of the imbalance driver, in (-1, 1)
    #[arg(long, default_value_t = 0.98, allow_hyphen_values = true)]
    autocorr: f64,
    /// Shock standard deviation of the imbalance driver
    #[arg(long, default_value_t = 0.2)]
    shock_std: f64,
    /// Unchanged-book snapshots inserted between consecutive events
    #[arg(long, default_value_t = 0)]
    repeats_per_gap: usize,
    /// Mid-price level of the generated book
    #[arg(long, default_value_t = 100.0)]
    base_price: f64,
    /// Price step between book levels; also the spread
    #[arg(long, default_value_t = 0.1)]
    tick: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let rc = RunConfig::resolve(&cli.common)?;
    match cli.cmd {
        Cmd::Ingest => cmds::ingest(&rc),
        Cmd::Analyze => cmds::analyze(&rc),
        Cmd::FitHawkes => cmds::fit_hawkes(&rc),
        Cmd::Forecast => cmds::forecast(&rc),
        Cmd::Backtest => cmds::backtest(&rc),
        Cmd::Montecarlo { scenarios } => cmds::montecarlo(&rc, scenarios),
        Cmd::Tune { grid } => cmds::tune(&rc, grid),
        Cmd::Synth(args) => cmds::synth(&rc, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; only real parse
            // failures are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(core_exit_code(&e))
        }
    }
}
