mod commands;
mod output;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use erw_core::ErwError;

use crate::output::Format;
use crate::parse::{parse_count, parse_rational, RationalArg};

#[derive(Debug, Parser)]
#[command(
    name = "erw",
    version,
    about = "Exact moments, moment-CLT rates and Monte Carlo for the elephant random walk",
    long_about = "Exact moments, moment-CLT rates and Monte Carlo for the elephant random walk.\n\n\
        Rationals (alpha, beta) are written p/q or as decimals; counts accept 1000, 10^3 or 1e3.\n\
        Every output file gets a manifest <out>.manifest.json that `erw replay` re-runs.\n\
        Exit codes: 0 success, 2 invalid input, 3 resource cap."
)]
pub struct Cli {
    /// Worker threads; results do not depend on it [default: all cores]
    #[arg(long, global = true, env = "ERW_THREADS", value_name = "N")]
    threads: Option<usize>,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Output file, or - for stdout (no manifest) [default: erw-<subcommand>.<csv|json>]
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact rational moments E[S_n^k]
    Exact(ExactArgs),
    /// Normalized moment deviations on a log-spaced time grid
    Deviations(DeviationArgs),
    /// Fitted decay exponents against predictions over a grid of alpha (crossover table)
    Rates(RateArgs),
    /// Monte Carlo moments and Kolmogorov distance of the normalized position
    Simulate(SimulateArgs),
    /// Berry-Esseen bound shapes and the s_n^2 / sigma_n^2 comparison
    Bounds(BoundArgs),
    /// Censored first-return times to the origin
    FirstReturn(FirstReturnArgs),
    /// Re-run the command recorded in a manifest
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Memory parameter alpha = 2p - 1, in (-1, 1)
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true)]
    alpha: RationalArg,

    /// First-step bias beta = 2q - 1, in [-1, 1]
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true, default_value = "0")]
    beta: RationalArg,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Time n (number of steps)
    #[arg(long, value_parser = parse_count)]
    n: u64,

    /// Comma-separated moment orders k
    #[arg(long, default_value = "1,2")]
    orders: String,

    /// Largest common denominator allowed, in bits
    #[arg(long, value_parser = parse_count, default_value = "4000000")]
    bit_cap: u64,
}

#[derive(Debug, Args)]
pub struct DeviationArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Comma-separated orders; even orders give E[(S/sigma)^k]/(k-1)!! - 1, odd give E[(S/sigma)^k]
    #[arg(long, default_value = "2,4")]
    orders: String,

    /// First grid time (steps); raised to 2 when alpha = 1/2
    #[arg(long, value_parser = parse_count, default_value = "1")]
    n_min: u64,

    /// Last grid time (steps)
    #[arg(long, value_parser = parse_count, default_value = "10^6")]
    n_max: u64,

    /// Grid points per decade of n
    #[arg(long, default_value_t = erw_core::grid::POINTS_PER_DECADE)]
    per_decade: u32,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Comma-separated alpha values [default: -9/10,-3/4,-1/2,-1/4,-1/10,0,1/10,1/4,2/5]
    #[arg(long, allow_hyphen_values = true)]
    alpha_grid: Option<String>,

    /// Comma-separated orders, each in 1..=12
    #[arg(long, default_value = "1,2,3,4,5,6")]
    orders: String,

    /// Largest time n (steps)
    #[arg(long, value_parser = parse_count, default_value = "10^6")]
    n_max: u64,

    /// Fit window lo,hi in steps [default: n_max/100,n_max]
    #[arg(long)]
    window: Option<String>,

    /// First-step bias used for odd orders
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true, default_value = "1")]
    beta: RationalArg,

    /// Emit only the predicted exponents and coefficients (no fitting)
    #[arg(long)]
    predictions_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DynamicsArg {
    /// Step up with probability (1 + alpha S_n/n)/2
    Conditional,
    /// Repeat a uniformly recalled past step with probability p, else flip it
    Replay,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Horizon n (steps)
    #[arg(long, value_parser = parse_count)]
    n: u64,

    /// Number of independent replicas
    #[arg(long, value_parser = parse_count)]
    replicas: u64,

    /// Master seed (required; replica streams are derived from it)
    #[arg(long)]
    seed: u64,

    /// Transition mechanism
    #[arg(long, value_enum, default_value_t = DynamicsArg::Conditional)]
    dynamics: DynamicsArg,

    /// Extra comma-separated recording times (steps); the horizon is always recorded
    #[arg(long)]
    checkpoints: Option<String>,

    /// Write normalized terminal positions as little-endian f64 to this file
    #[arg(long, value_name = "PATH")]
    dump: Option<PathBuf>,

    /// Longest horizon (steps) accepted by the replay dynamics
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    replay_cap: u64,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Memory parameter alpha, in (-1, 1/2]
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true)]
    alpha: RationalArg,

    /// First grid time (steps), at least 3
    #[arg(long, value_parser = parse_count, default_value = "10")]
    n_min: u64,

    /// Last grid time (steps)
    #[arg(long, value_parser = parse_count, default_value = "10^6")]
    n_max: u64,

    /// Grid points per decade of n
    #[arg(long, default_value_t = 10)]
    per_decade: u32,
}

#[derive(Debug, Args)]
pub struct FirstReturnArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Censoring horizon (steps)
    #[arg(long, value_parser = parse_count)]
    horizon: u64,

    /// Number of independent replicas
    #[arg(long, value_parser = parse_count)]
    replicas: u64,

    /// Master seed (required)
    #[arg(long)]
    seed: u64,

    /// Comma-separated censoring points (steps) to report [default: 10^3,10^4,10^5 up to the horizon, and the horizon]
    #[arg(long)]
    cutoffs: Option<String>,

    /// Transition mechanism
    #[arg(long, value_enum, default_value_t = DynamicsArg::Conditional)]
    dynamics: DynamicsArg,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    manifest: PathBuf,
}

/// A bad flag combination caught after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<ErwError>() {
        return match e {
            ErwError::ResourceCap(_) => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse_from(std::iter::once("erw".to_string()).chain(raw.iter().cloned()));
    match commands::dispatch(cli, &raw) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
