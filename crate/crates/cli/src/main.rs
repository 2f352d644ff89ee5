//! `intraeff`: command-line entry point for ingestion, synthetic data, the
//! walk-forward experiment and its reports.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use intraeff::Error;

#[derive(Debug, Parser)]
#[command(name = "intraeff", version, about = "Intraday relative-return learners on minute bars")]
struct Cli {
    /// Log progress (repeat for more detail). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate trade CSV files into a minute-bar store.
    Ingest(IngestArgs),
    /// Summarize a bar store or print one symbol-day of bars.
    Bars(BarsArgs),
    /// Print the dollar-volume universe for a date range.
    Universe(UniverseArgs),
    /// Generate a synthetic market into a bar store.
    Synth(SynthArgs),
    /// Run the walk-forward experiment and write results and reports.
    Run(RunArgs),
    /// Rebuild report files from a run's daily_returns.csv.
    Report(ReportArgs),
    /// Run the built-in verification checks.
    Selfcheck,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Trade CSV files (`timestamp,symbol,price,size,exchange`).
    #[arg(required = true)]
    trades: Vec<PathBuf>,
    #[arg(long)]
    store: PathBuf,
    /// `effective_date,old_symbol,new_symbol` rows.
    #[arg(long)]
    symbol_map: Option<PathBuf>,
    /// One excluded symbol per line.
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// One early-close date per line; those sessions are skipped.
    #[arg(long)]
    early_close: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BarsArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, requires = "symbol")]
    date: Option<NaiveDate>,
    #[arg(long, requires = "date")]
    symbol: Option<String>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UniverseArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    date: NaiveDate,
    /// Last date of the range (defaults to `--date`).
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long, default_value_t = 500)]
    size: usize,
    #[arg(long, default_value_t = 12)]
    window_months: u32,
    #[arg(long)]
    exclusions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic market TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also emit trade prints reproducing every bar.
    #[arg(long)]
    trades: Option<PathBuf>,
    /// Write the realized-signal report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Book P&L on universe-relative instead of absolute returns.
    #[arg(long)]
    pnl_relative: bool,
    #[arg(long)]
    split_date: Option<NaiveDate>,
    /// Monthly HFT volume ratios, `month,hft_ratio`.
    #[arg(long)]
    hft_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run output directory holding daily_returns.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    split_date: Option<NaiveDate>,
    #[arg(long)]
    hft_file: Option<PathBuf>,
}

/// Exit statuses.
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_CHECK: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn check(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CHECK,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_USAGE,
            Error::Io { .. }
            | Error::Corrupt { .. }
            | Error::Malformed(_)
            | Error::SymbolCycle { .. }
            | Error::InsufficientHistory(_)
            | Error::MissingData(_)
            | Error::Empty(_) => EXIT_DATA,
            _ => EXIT_CHECK,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Bars(a) => commands::bars(a),
        Command::Universe(a) => commands::universe(a),
        Command::Synth(a) => commands::synth(a),
        Command::Run(a) => commands::run(a),
        Command::Report(a) => commands::report(a),
        Command::Selfcheck => commands::selfcheck(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
