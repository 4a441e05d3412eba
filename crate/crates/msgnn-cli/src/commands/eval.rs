use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use msgnn::datagen::read_trajectory;
use msgnn::geometry::PeriodicSpec;
use msgnn::remesh::interpolate_idw;

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted trajectory file.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth trajectory file.
    #[arg(long)]
    truth: PathBuf,
    /// Neighbour count for interpolation when node sets differ.
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Periods `px,py` for interpolation across periodic seams (0 = none).
    #[arg(long)]
    periodic: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let pred = read_trajectory(&args.pred, 0.0)?;
    let truth = read_trajectory(&args.truth, 0.0)?;
    if pred.n_frames != truth.n_frames {
        bail!("frame-count mismatch: {} predicted vs {} truth", pred.n_frames, truth.n_frames);
    }
    if pred.n != truth.n {
        bail!("field-dimension mismatch: {} vs {}", pred.n, truth.n);
    }
    let n = pred.n;
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

    let same_nodes = pred.nodes.positions == truth.nodes.positions;
    let mut per_step = Vec::with_capacity(pred.n_frames);
    for step in 0..pred.n_frames {
        let truth_frame = truth.frame(step);
        let pred_on_truth: Vec<f64> = if same_nodes {
            pred.frame(step).to_vec()
        } else {
            interpolate_idw(&pred.nodes, pred.frame(step), n, &truth.nodes.positions, args.k, &periodic)?
        };
        let mae = pred_on_truth
            .iter()
            .zip(truth_frame)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / truth_frame.len() as f64;
        per_step.push(mae);
    }

    // Prediction steps exclude the shared initial frame.
    let prediction_steps = &per_step[1.min(per_step.len() - 1)..];
    let all = prediction_steps.iter().sum::<f64>() / prediction_steps.len().max(1) as f64;
    let final_mae = *per_step.last().unwrap();

    let mut report = String::new();
    report.push_str("# MAE over all nodes and field components per step;\n");
    report.push_str("# 'all' is the mean of the per-step MAEs over prediction steps (step >= 1).\n");
    report.push_str("step,mae\n");
    for (i, m) in per_step.iter().enumerate() {
        report.push_str(&format!("{i},{m}\n"));
    }
    report.push_str(&format!("final,{final_mae}\n"));
    report.push_str(&format!("all,{all}\n"));
    match &args.out {
        Some(path) => fs::write(path, report)?,
        None => print!("{report}"),
    }
    Ok(())
}
