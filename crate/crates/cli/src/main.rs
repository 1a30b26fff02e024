use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod report;

/// Volume-weighted price moments, densities, and synthetic tapes from
/// tick-level trade data.
#[derive(Debug, Parser)]
#[command(name = "trade-moments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Power sums, price moments, and frequency mean per window.
    Moments(MomentsArgs),
    /// Approximate price density of one window from F_2 or F_3.
    Density(DensityArgs),
    /// Frequency mean versus VWAP per window.
    Compare(MomentsArgs),
    /// Generate a synthetic tape from a JSON tape spec.
    Simulate(SimulateArgs),
    /// Per-agent and total power sums, and trade-weighted expectations.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampArg {
    EpochNanos,
    EpochMillis,
    Iso8601,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignArg {
    Centered,
    Trailing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightArg {
    Value,
    Volume,
    Count,
}

/// Flags shared by every tape-reading subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Input tape format.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: InputFormat,
    /// Timestamp encoding of the `ts` field.
    #[arg(long, value_enum, default_value = "epoch-nanos")]
    pub timestamps: TimestampArg,
    /// Window width in seconds; omitted means one window over the whole tape.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, value_enum, default_value = "centered")]
    pub align: AlignArg,
    /// Highest power of the trade sums.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub nmax: u32,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub output: OutputFormat,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Approximation order.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(2..=3))]
    pub k: u32,
    #[arg(long, default_value_t = 4097, value_parser = clap::value_parser!(u32).range(2..))]
    pub grid_points: u32,
    /// Grid half-width in standard deviations around the mean.
    #[arg(long, default_value_t = 6.0)]
    pub grid_sigmas: f64,
    /// Which window to use when --window splits the tape.
    #[arg(long, default_value_t = 0)]
    pub window_index: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON tape spec.
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tape encoding to write.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: InputFormat,
    /// Tape file; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AggregateArgs {
    /// Agent tape; repeatable. Agents come from the `agent_id` column, or the
    /// file stem when the column is absent.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Weight for the average of expectation labels.
    #[arg(long, value_enum)]
    pub weight: Option<WeightArg>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub power: u32,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable files, or malformed data.
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    /// Prefixes the message with the offending file.
    pub fn prefixed(self, path: &Path) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Numerical(m) => CliError::Numerical(format!("{}: {m}", path.display())),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<trade_moments::Error> for CliError {
    fn from(e: trade_moments::Error) -> Self {
        let message = e.to_string();
        if e.is_numerical() {
            CliError::Numerical(message)
        } else {
            CliError::Usage(message)
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Opens `--out` or standard output.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Moments(args) => commands::moments(&args),
        Command::Density(args) => commands::density(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Aggregate(args) => commands::aggregate(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
