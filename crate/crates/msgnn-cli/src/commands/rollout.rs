use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use msgnn::datagen::{write_trajectory, Dataset, Trajectory};
use msgnn::model::{FieldFrame, RolloutConfig};
use msgnn::remesh::RemeshConfig;
use serde::Serialize;

use crate::common::{load_model, load_model_config, rasterize_pgm, resolve_data_dir, write_resolved_config};

#[derive(Args)]
pub struct RolloutArgs {
    /// Model architecture JSON written by `train` (model.json).
    #[arg(long)]
    model: PathBuf,
    /// Checkpoint file.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory holding the initial frame (defaults to $MSGNN_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Simulation index within the dataset.
    #[arg(long, default_value_t = 0)]
    sim: usize,
    /// Frame index to start from.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Number of autoregressive steps.
    #[arg(long, default_value_t = 49)]
    steps: usize,
    /// Adaptive remeshing as `c,f` fractions (with --adapt-k neighbours).
    #[arg(long)]
    adapt: Option<String>,
    #[arg(long, default_value_t = 4)]
    adapt_k: usize,
    /// Write a PGM snapshot plus a CSV node dump every N steps.
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct ResolvedRollout<'a> {
    model: &'a PathBuf,
    ckpt: &'a PathBuf,
    sim: usize,
    start: usize,
    steps: usize,
    adapt: Option<RemeshConfig>,
    snapshots: Option<usize>,
}

pub fn run(args: RolloutArgs) -> Result<()> {
    let config = load_model_config(&args.model)?;
    let data_dir = resolve_data_dir(args.data.clone())?;
    let ds = Dataset::open(&data_dir)?;
    let traj = ds.load_sim(args.sim)?;
    if args.start >= traj.n_frames {
        bail!("start frame {} out of range ({} frames)", args.start, traj.n_frames);
    }
    let adapt = match &args.adapt {
        Some(spec) => {
            let parts: Vec<f64> = crate::common::parse_list(spec)?;
            if parts.len() != 2 {
                bail!("--adapt expects c,f");
            }
            Some(RemeshConfig::new(parts[0], parts[1], args.adapt_k)?)
        }
        None => None,
    };
    write_resolved_config(
        &args.out,
        "rollout_config.json",
        &ResolvedRollout {
            model: &args.model,
            ckpt: &args.ckpt,
            sim: args.sim,
            start: args.start,
            steps: args.steps,
            adapt,
            snapshots: args.snapshots,
        },
    )?;

    let model = load_model(&config, &args.ckpt, None).context("loading checkpoint")?;
    if config.field_dim != traj.n || config.param_dim != traj.nodes.n_p {
        bail!(
            "checkpoint/config mismatch with dataset: model (n = {}, n_p = {}) vs data (n = {}, n_p = {})",
            config.field_dim,
            config.param_dim,
            traj.n,
            traj.nodes.n_p
        );
    }
    let domain = ds.meta.domain();
    let n = traj.n;
    let initial = FieldFrame::new(traj.frame(args.start).to_vec(), n, args.start as f64 * traj.dt)?;

    // Prescribe Dirichlet values from the truth when the node set has any.
    let omega_idx: Vec<usize> = (0..traj.nodes.len()).filter(|&i| traj.nodes.omega[i] == 1).collect();
    let schedule: Option<Vec<Vec<f64>>> = if omega_idx.is_empty() {
        None
    } else {
        if args.start + args.steps >= traj.n_frames {
            bail!(
                "rollout needs prescribed boundary values: only {} truth frames available from start {}",
                traj.n_frames,
                args.start
            );
        }
        Some(
            (1..=args.steps)
                .map(|s| {
                    let frame = traj.frame(args.start + s);
                    omega_idx
                        .iter()
                        .flat_map(|&i| frame[i * n..(i + 1) * n].to_vec())
                        .collect()
                })
                .collect(),
        )
    };

    let rollout = model.rollout(
        &traj.nodes,
        &domain,
        &initial,
        &RolloutConfig {
            steps: args.steps,
            dt: traj.dt,
            dirichlet: schedule.as_deref(),
            adapt,
        },
    )?;

    let mut frames = Vec::with_capacity(rollout.frames.len() * traj.nodes.len() * n);
    for f in &rollout.frames {
        frames.extend_from_slice(&f.values);
    }
    let pred = Trajectory {
        nodes: traj.nodes.clone(),
        frames,
        n_frames: rollout.frames.len(),
        n,
        dt: traj.dt,
    };
    let pred_path = args.out.join("pred.bin");
    write_trajectory(&pred_path, &pred)?;

    if let Some(every) = args.snapshots {
        if every == 0 {
            bail!("--snapshots must be positive");
        }
        for (idx, frame) in rollout.frames.iter().enumerate() {
            if idx % every != 0 && idx != rollout.frames.len() - 1 {
                continue;
            }
            if n == 1 {
                let pgm = rasterize_pgm(&traj.nodes.positions, &frame.values, domain.min, domain.max, 400);
                fs::write(args.out.join(format!("frame_{idx:04}.pgm")), pgm)?;
            }
            let mut csv = String::from("x,y,value\n");
            for (i, p) in traj.nodes.positions.iter().enumerate() {
                let vals: Vec<String> = (0..n).map(|c| frame.values[i * n + c].to_string()).collect();
                csv.push_str(&format!("{},{},{}\n", p[0], p[1], vals.join(";")));
            }
            fs::write(args.out.join(format!("frame_{idx:04}.csv")), csv)?;
        }
    }

    println!(
        "rolled out {} steps from frame {} of sim {}; wrote {} ({} frames, final node count {})",
        args.steps,
        args.start,
        args.sim,
        pred_path.display(),
        pred.n_frames,
        rollout.final_nodes.len()
    );
    Ok(())
}
