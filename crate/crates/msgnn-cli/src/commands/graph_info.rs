use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use msgnn::datagen::{read_trajectory, Dataset};
use msgnn::graphs::{build_hierarchy, hierarchy_info};

use crate::common::resolve_data_dir;

#[derive(Args)]
pub struct GraphInfoArgs {
    /// Trajectory file supplying the node set; alternatively use --data/--sim.
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Dataset directory (defaults to $MSGNN_DATA when --sim is used).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Simulation index within the dataset.
    #[arg(long)]
    sim: Option<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Grid cell sizes for levels 2..L, e.g. 0.02,0.04,0.08.
    #[arg(long, default_value = "0.02,0.04,0.08")]
    cells: String,
}

pub fn run(args: GraphInfoArgs) -> Result<()> {
    let (nodes, domain) = match (&args.traj, args.sim) {
        (Some(path), _) => {
            let traj = read_trajectory(path, 0.0)?;
            // Standalone trajectories carry no domain; assume the unit box.
            (traj.nodes, msgnn::geometry::Domain::unit_periodic())
        }
        (None, Some(sim)) => {
            let ds = Dataset::open(&resolve_data_dir(args.data.clone())?)?;
            let traj = ds.load_sim(sim)?;
            (traj.nodes, ds.meta.domain())
        }
        (None, None) => bail!("provide --traj or --sim (with --data / MSGNN_DATA)"),
    };
    let cells: Vec<f64> = crate::common::parse_list(&args.cells)?;
    let cell_sizes: Vec<(f64, f64)> = cells.iter().map(|&c| (c, c)).collect();
    let hierarchy = build_hierarchy(&nodes, cell_sizes.len() + 1, &cell_sizes, args.k, &domain)?;
    println!("level,nodes,edges,mean_in_degree");
    for info in hierarchy_info(&hierarchy) {
        println!("{},{},{},{:.3}", info.level, info.nodes, info.edges, info.mean_in_degree);
    }
    Ok(())
}
