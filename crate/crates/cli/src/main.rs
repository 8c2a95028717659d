use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Batch analyses of logit dynamics in heterogeneous routing games.
#[derive(Parser, Debug)]
#[command(name = "hetroute", version)]
struct Cli {
    /// Worker threads (overridden by HETROUTE_JOBS; default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List each population's routes in enumeration order.
    Routes(GameArg),
    /// Integrate the logit dynamics from one initial condition.
    Simulate(SimulateArgs),
    /// Multi-start search for fixed points of the logit map.
    FixedPoints(FixedPointArgs),
    /// Follow fixed-point branches from large to small noise.
    Sweep(SweepArgs),
    /// Sampled ℓ1 contraction certificate, or an estimate of its noise threshold.
    Certify(CertifyArgs),
    /// Check a flow file for Wardrop and strict equilibrium.
    Wardrop(WardropArgs),
    /// Symmetry check, potential values and Lyapunov monitor.
    Potential(PotentialArgs),
    /// Finite-population agent simulation.
    Agents(AgentArgs),
}

#[derive(Args, Debug)]
struct GameArg {
    game: PathBuf,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Directory for CSV and JSON artifacts; only a summary is printed without it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    game: PathBuf,
    #[arg(long)]
    eta: f64,
    /// Time horizon.
    #[arg(long = "t")]
    horizon: f64,
    /// uniform | vertex:k | vertex:a,b,.. | file:path | dirichlet:seed
    #[arg(long, default_value = "uniform")]
    z0: String,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Local error tolerance; switches to adaptive step doubling.
    #[arg(long)]
    adaptive: Option<f64>,
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    /// Integrate to the horizon even once the state is stationary.
    #[arg(long)]
    no_stop: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct FixedPointArgs {
    game: PathBuf,
    #[arg(long)]
    eta: f64,
    /// Random interior starts in addition to the vertices and the barycenter.
    #[arg(long, default_value_t = 32)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct SweepArgs {
    game: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    eta_max: f64,
    #[arg(long, default_value_t = 0.01)]
    eta_min: f64,
    #[arg(long, default_value_t = 60)]
    points: usize,
    /// f:<link id> or z:<population id>:<route index>; defaults to the first link.
    #[arg(long)]
    coord: Option<String>,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Wardrop gap above which a limit point is flagged unresolved.
    #[arg(long, default_value_t = 1e-2)]
    limit_tol: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    game: PathBuf,
    #[arg(long, required_unless_present = "threshold")]
    eta: Option<f64>,
    /// Estimate the noise level above which the certificate holds.
    #[arg(long, conflicts_with = "eta")]
    threshold: bool,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Relative bracket width for the threshold bisection.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Random trajectory pairs checked against the contraction inequality.
    #[arg(long, default_value_t = 0)]
    pairs: usize,
    #[arg(long = "t", default_value_t = 10.0)]
    horizon: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct WardropArgs {
    game: PathBuf,
    /// JSON {population id: {route index: flow}}.
    flow: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct PotentialArgs {
    game: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long = "t", default_value_t = 20.0)]
    horizon: f64,
    #[arg(long, default_value = "vertex:0")]
    z0: String,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct AgentArgs {
    game: PathBuf,
    #[arg(long)]
    eta: f64,
    /// Agents per population: one count for all, or a comma-separated list.
    #[arg(long)]
    n: String,
    #[arg(long = "t")]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output sampling interval.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value = "uniform")]
    z0: String,
    /// Report the sup-distance to the ODE solution on the same grid.
    #[arg(long)]
    compare: bool,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = std::env::var("HETROUTE_JOBS").ok().and_then(|v| v.parse::<usize>().ok()).or(cli.jobs);
    if let Some(n) = jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(if e.input { 2 } else { 3 })
        }
    }
}
