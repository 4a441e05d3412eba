use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use msgnn::datagen::{read_trajectory, write_trajectory, Trajectory};
use msgnn::geometry::{write_node_set, PeriodicSpec};
use msgnn::remesh::{adapt, RemeshConfig};

#[derive(Args)]
pub struct RemeshArgs {
    /// Trajectory file supplying the nodes and the frame.
    #[arg(long)]
    traj: PathBuf,
    /// Frame index to adapt.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Coarsening fraction.
    #[arg(long, default_value_t = 0.4)]
    c: f64,
    /// Refinement fraction.
    #[arg(long, default_value_t = 0.1)]
    f: f64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Periods `px,py` (0 = non-periodic axis).
    #[arg(long)]
    periodic: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: RemeshArgs) -> Result<()> {
    let traj = read_trajectory(&args.traj, 0.0)?;
    if args.frame >= traj.n_frames {
        bail!("frame {} out of range ({} frames)", args.frame, traj.n_frames);
    }
    let periodic = match &args.periodic {
        Some(spec) => {
            let parts: Vec<f64> = crate::common::parse_list(spec)?;
            if parts.len() != 2 {
                bail!("--periodic expects px,py");
            }
            PeriodicSpec {
                period_x: (parts[0] > 0.0).then_some(parts[0]),
                period_y: (parts[1] > 0.0).then_some(parts[1]),
            }
        }
        None => PeriodicSpec::none(),
    };
    let cfg = RemeshConfig::new(args.c, args.f, args.k)?;
    let (nodes, values) = adapt(&traj.nodes, traj.frame(args.frame), traj.n, &cfg, &periodic)?;

    fs::create_dir_all(&args.out)?;
    let nodes_path = args.out.join("nodes.bin");
    let mut buf = Vec::new();
    write_node_set(&mut buf, &nodes)?;
    fs::write(&nodes_path, buf)?;
    let frame_path = args.out.join("adapted.bin");
    write_trajectory(
        &frame_path,
        &Trajectory { nodes: nodes.clone(), frames: values, n_frames: 1, n: traj.n, dt: traj.dt },
    )?;
    println!(
        "adapted frame {}: {} -> {} nodes (c = {}, f = {}, k = {}); wrote {} and {}",
        args.frame,
        traj.nodes.len(),
        nodes.len(),
        args.c,
        args.f,
        args.k,
        nodes_path.display(),
        frame_path.display()
    );
    Ok(())
}
