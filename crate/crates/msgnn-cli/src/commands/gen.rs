use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use msgnn::datagen::{gen_advection_dataset, AdvectionKind, Dataset, GenConfig};

use crate::common::write_resolved_config;

#[derive(Args)]
pub struct GenArgs {
    /// Dataset kind: box (periodic square, exact oracle) or inbox
    /// (inflow channel, semi-Lagrangian oracle).
    #[arg(long, value_parser = parse_kind)]
    kind: AdvectionKind,
    /// Number of simulations.
    #[arg(long)]
    count: usize,
    /// Frames per simulation (including t = 0).
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0.03)]
    dt: f64,
    /// Target node spacing of the fresh per-simulation node sets.
    #[arg(long, default_value_t = 0.032)]
    spacing: f64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<AdvectionKind, String> {
    match s {
        "box" => Ok(AdvectionKind::Box),
        "inbox" => Ok(AdvectionKind::Inbox),
        other => Err(format!("unknown kind {other:?}; expected box or inbox")),
    }
}

pub fn run(args: GenArgs, seed: u64) -> Result<()> {
    let cfg = GenConfig {
        kind: args.kind,
        n_sims: args.count,
        n_steps: args.steps,
        dt: args.dt,
        spacing: args.spacing,
        seed,
    };
    write_resolved_config(&args.out, "gen_config.json", &cfg)?;
    let meta = gen_advection_dataset(&cfg, &args.out).context("dataset generation failed")?;

    let ds = Dataset { dir: args.out.clone(), meta };
    let mut node_counts = Vec::with_capacity(ds.meta.sim_count);
    for i in 0..ds.meta.sim_count {
        node_counts.push(ds.load_sim(i)?.nodes.len());
    }
    let min = node_counts.iter().min().unwrap();
    let max = node_counts.iter().max().unwrap();
    let mean = node_counts.iter().sum::<usize>() as f64 / node_counts.len() as f64;
    println!(
        "generated {} sims ({:?}) at {}: nodes min/mean/max = {}/{:.1}/{}, {} frames each, dt = {}",
        ds.meta.sim_count,
        ds.meta.kind,
        args.out.display(),
        min,
        mean,
        max,
        ds.meta.n_steps,
        ds.meta.dt
    );
    Ok(())
}
