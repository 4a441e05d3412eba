use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use msgnn::geometry::{sample_nodes, Domain};
use msgnn::model::ModelTopology;
use serde::Serialize;

use crate::common::{load_model, load_model_config, write_resolved_config};

#[derive(Args)]
pub struct BenchArgs {
    /// Model architecture JSON (model.json).
    #[arg(long)]
    model: PathBuf,
    /// Checkpoint file.
    #[arg(long)]
    ckpt: PathBuf,
    /// Node spacings to sweep, coarse to fine.
    #[arg(long, default_value = "0.06,0.045,0.032,0.024")]
    spacings: String,
    /// Timed repetitions per sweep point.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Untimed warmup repetitions per sweep point.
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    /// Optional directory for the resolved config and report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedBench<'a> {
    model: &'a PathBuf,
    ckpt: &'a PathBuf,
    spacings: Vec<f64>,
    reps: usize,
    warmup: usize,
}

pub fn run(args: BenchArgs, seed: u64) -> Result<()> {
    let config = load_model_config(&args.model)?;
    let spacings: Vec<f64> = crate::common::parse_list(&args.spacings)?;
    if let Some(dir) = &args.out {
        write_resolved_config(
            dir,
            "bench_config.json",
            &ResolvedBench {
                model: &args.model,
                ckpt: &args.ckpt,
                spacings: spacings.clone(),
                reps: args.reps,
                warmup: args.warmup,
            },
        )?;
    }
    let model = load_model(&config, &args.ckpt, None).context("loading checkpoint")?;
    let domain = Domain::unit_periodic();

    let mut report = String::from("nodes,spacing,ms_per_step\n");
    for (point, &spacing) in spacings.iter().enumerate() {
        let mut nodes = sample_nodes(&domain, spacing, seed + point as u64)?;
        nodes.n_p = config.param_dim;
        nodes.params = vec![0.3; nodes.len() * config.param_dim];
        let hierarchy = model.build_hierarchy(&nodes, &domain)?;
        let topo = ModelTopology::new(&hierarchy)?;
        let values = ndarray::Array2::from_elem((nodes.len(), config.field_dim), 0.1);
        for _ in 0..args.warmup {
            let _ = model.step_values(&topo, &values, &nodes)?;
        }
        let mut times = Vec::with_capacity(args.reps.max(20));
        for _ in 0..args.reps.max(20) {
            let t0 = Instant::now();
            let _ = model.step_values(&topo, &values, &nodes)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[times.len() / 2];
        report.push_str(&format!("{},{},{:.3}\n", nodes.len(), spacing, median));
    }
    print!("{report}");
    if let Some(dir) = &args.out {
        std::fs::write(dir.join("bench.csv"), &report)?;
    }
    Ok(())
}
