//! `upairs` — command line for the universal pairs-trading toolkit.
//!
//! Subcommands: `price` (guarantee price and hedge cost), `horizon`
//! (smallest horizon meeting a regret tolerance), `hindsight` (best
//! rebalancing rules for a recorded market), `run` (the online aggregated
//! pair strategy), `simulate` (seeded synthetic markets), and `verify`
//! (exhaustive game-value self-checks).
//!
//! Every command prints one JSON document to stdout. Errors print a
//! single-line JSON object to stderr and exit with 2 (invalid input or a
//! ruined mandatory computation), 3 (numeric scale guard), or 4 (failed
//! verification).

mod cmds;
mod csvio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use upairs::Error;

#[derive(Parser)]
#[command(
    name = "upairs",
    version,
    about = "Universal pairs trading: price the hindsight guarantee, benchmark recorded \
             markets, run the online strategy, simulate markets, and verify the game value",
    after_help = "Parallel pair sweeps honor the RAYON_NUM_THREADS environment variable.\n\
                  Exit codes: 0 success, 2 invalid input, 3 numeric scale guard, 4 failed \
                  verification.",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price the guarantee p(T,s), the hedge cost C(m,s)*p(T,s), and the pair regret bound
    Price(PriceArgs),
    /// Smallest horizon T whose per-session pair regret bound is at most epsilon
    Horizon(HorizonArgs),
    /// Hindsight-optimal rebalancing benchmarks for a market CSV
    Hindsight(HindsightArgs),
    /// Run the aggregated online pair strategy over a market CSV
    Run(RunArgs),
    /// Generate a seeded synthetic market CSV
    #[command(subcommand)]
    Simulate(SimulateKind),
    /// Exhaustive self-checks of the trading game at one small configuration
    Verify(VerifyArgs),
}

#[derive(Args)]
struct PriceArgs {
    /// Horizon T (number of trading sessions)
    #[arg(long = "T")]
    t: usize,
    /// Support size s of the benchmark rebalancing rule
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Universe size m (defaults to s; scales the hedge cost by C(m,s))
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct HorizonArgs {
    /// Target per-session regret bound
    #[arg(long)]
    epsilon: f64,
    /// Universe size m
    #[arg(long, default_value_t = 2)]
    m: usize,
}

/// How to interpret the rows of an input market CSV.
#[derive(Clone, Copy, ValueEnum)]
enum InputMode {
    /// Rows are per-session gross returns (price relatives)
    Returns,
    /// Rows are price levels; consecutive ratios become gross returns
    Prices,
}

impl From<InputMode> for csvio::Mode {
    fn from(mode: InputMode) -> Self {
        match mode {
            InputMode::Returns => csvio::Mode::Returns,
            InputMode::Prices => csvio::Mode::Prices,
        }
    }
}

#[derive(Args)]
struct MarketInput {
    /// Input market CSV: header `t,<name_1>,...,<name_m>`, one row per session
    #[arg(long)]
    input: PathBuf,
    /// Interpret rows as gross returns or as price levels
    #[arg(long, value_enum, default_value = "returns")]
    mode: InputMode,
    /// Keep only the first T return sessions of the file
    #[arg(long = "T")]
    t: Option<usize>,
}

#[derive(Args)]
struct HindsightArgs {
    #[command(flatten)]
    input: MarketInput,
    /// Also solve the best rule over supports of this size when s > 2
    #[arg(long, default_value_t = 2)]
    s: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: MarketInput,
    /// Output directory for trajectory.csv and report.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Include per-pair engine states and running hindsight benchmarks
    #[arg(long)]
    pairs_report: bool,
}

#[derive(Subcommand)]
enum SimulateKind {
    /// Two zero-growth volatile stocks; rebalancing harvests sigma^2/4 per unit time
    Gbm {
        /// Volatility of each stock's log price
        #[arg(long, default_value_t = std::f64::consts::LN_2)]
        sigma: f64,
        /// Time step between sessions
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Total simulated time (time/dt sessions)
        #[arg(long, default_value_t = 10.0)]
        time: f64,
        #[command(flatten)]
        common: SimCommon,
    },
    /// Independent log-normal gross returns for m assets over T sessions
    Lognormal {
        /// Number of assets
        #[arg(long)]
        m: usize,
        /// Number of sessions
        #[arg(long = "T")]
        t: usize,
        /// Per-session drift of each log return
        #[arg(long, default_value_t = 0.0)]
        nu: f64,
        /// Per-session volatility of each log return
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        #[command(flatten)]
        common: SimCommon,
    },
    /// Horse race at unit odds: exactly one winning asset per session
    Horserace {
        /// Number of assets
        #[arg(long)]
        m: usize,
        /// Number of sessions
        #[arg(long = "T")]
        t: usize,
        /// Comma-separated winning probabilities, one per asset (default uniform)
        #[arg(long, value_delimiter = ',')]
        win_probs: Option<Vec<f64>>,
        #[command(flatten)]
        common: SimCommon,
    },
}

#[derive(Args)]
struct SimCommon {
    /// RNG seed; identical specs and seeds reproduce identical markets
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Universe size m
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Benchmark support size (2 or m)
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Horizon T (all m^T winner paths are enumerated)
    #[arg(long = "T", default_value_t = 4)]
    t: usize,
}

fn dispatch(command: Command) -> upairs::Result<()> {
    match command {
        Command::Price(a) => cmds::price(a.t, a.s, a.m),
        Command::Horizon(a) => cmds::horizon(a.epsilon, a.m),
        Command::Hindsight(a) => {
            cmds::hindsight_benchmarks(&a.input.input, a.input.mode.into(), a.input.t, a.s)
        }
        Command::Run(a) => cmds::run(
            &a.input.input,
            a.input.mode.into(),
            a.input.t,
            &a.out,
            a.pairs_report,
        ),
        Command::Simulate(kind) => match kind {
            SimulateKind::Gbm { sigma, dt, time, common } => {
                cmds::simulate_gbm(sigma, dt, time, common.seed, &common.out)
            }
            SimulateKind::Lognormal { m, t, nu, sigma, common } => {
                cmds::simulate_lognormal(m, t, nu, sigma, common.seed, &common.out)
            }
            SimulateKind::Horserace { m, t, win_probs, common } => {
                cmds::simulate_horserace(m, t, win_probs, common.seed, &common.out)
            }
        },
        Command::Verify(a) => cmds::verify(a.m, a.s, a.t),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = match &e {
                Error::InvalidInput(_) => (2u8, "invalid_input"),
                Error::Bankrupt(_) => (2, "bankrupt"),
                Error::ScaleGuard(_) => (3, "scale_guard"),
                Error::Verification(_) => (4, "verification"),
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": kind, "message": e.to_string(), "exit": code })
            );
            ExitCode::from(code)
        }
    }
}
