//! Operator CLI for the multi-scale GNN simulation engine: data generation,
//! training, rollout, evaluation, remeshing, benchmarking and graph
//! diagnostics.

mod commands;
mod common;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "msgnn", version, about = "Multi-scale GNN continuum-field simulator")]
struct Cli {
    /// Worker threads (default: all cores; bench defaults to 1).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed for commands that draw randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an advection dataset with built-in oracles.
    Gen(commands::gen::GenArgs),
    /// Train a model on a dataset.
    Train(commands::train::TrainArgs),
    /// Autoregressive rollout from a checkpoint.
    Rollout(commands::rollout::RolloutArgs),
    /// Compare a predicted trajectory against the truth (MAE report).
    Eval(commands::eval::EvalArgs),
    /// Adaptively coarsen/refine one trajectory frame.
    Remesh(commands::remesh::RemeshArgs),
    /// Measure inference time per step across resolutions.
    Bench(commands::bench::BenchArgs),
    /// Print per-level hierarchy statistics.
    GraphInfo(commands::graph_info::GraphInfoArgs),
}

fn main() {
    let cli = Cli::parse();
    let threads = match cli.command {
        // Stable timings: the benchmark stays single-threaded unless
        // explicitly overridden.
        Command::Bench(_) => cli.threads.or(Some(1)),
        _ => cli.threads,
    };
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: failed to configure {t} threads: {e}");
            std::process::exit(1);
        }
    }
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(args, cli.seed),
        Command::Train(args) => commands::train::run(args, cli.seed),
        Command::Rollout(args) => commands::rollout::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Remesh(args) => commands::remesh::run(args),
        Command::Bench(args) => commands::bench::run(args, cli.seed),
        Command::GraphInfo(args) => commands::graph_info::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
