use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use msgnn::datagen::{AdvectionKind, Dataset};
use msgnn::model::{Model, ModelConfig};
use msgnn::neural::AdamState;
use msgnn::training::{train, InMemoryTrainingSet, ResamplingBoxSet, TrainConfig, TrainingSet};

use crate::common::{load_model, resolve_data_dir, write_resolved_config};

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory (defaults to $MSGNN_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for configs, the log and checkpoints.
    #[arg(long)]
    out: PathBuf,

    // Model architecture.
    /// Number of scales L.
    #[arg(long, default_value_t = 3)]
    scales: usize,
    /// MP layers per scale, e.g. 2,2,4.
    #[arg(long, default_value = "2,2,4")]
    mp: String,
    /// Grid cell sizes for levels 2..L, e.g. 0.02,0.04.
    #[arg(long, default_value = "0.02,0.04")]
    cells: String,
    #[arg(long, default_value_t = 128)]
    latent: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    lambda_d: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_e: f64,

    // Training protocol.
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long)]
    max_seconds: Option<f64>,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    #[arg(long, default_value_t = 10)]
    max_rollout: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 5)]
    plateau: usize,
    #[arg(long, default_value_t = 0.5)]
    lr_factor: f64,
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    /// Redraw the training node sets every epoch (box datasets only).
    #[arg(long, default_value_t = false)]
    resample: bool,
    /// Use only the first N simulations.
    #[arg(long)]
    limit: Option<usize>,
    /// Checkpoint every N epochs in addition to the final one.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Resume parameters and optimizer state from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

pub fn run(args: TrainArgs, seed: u64) -> Result<()> {
    let data_dir = resolve_data_dir(args.data.clone())?;
    let ds = Dataset::open(&data_dir)?;

    let mp: Vec<usize> = crate::common::parse_list(&args.mp)?;
    let cell_list: Vec<f64> = if args.scales > 1 {
        crate::common::parse_list(&args.cells)?
    } else {
        Vec::new()
    };
    let config = ModelConfig {
        scales: args.scales,
        mp_layers: mp,
        k: args.k,
        cell_sizes: cell_list.iter().map(|&c| (c, c)).collect(),
        latent_width: args.latent,
        field_dim: ds.meta.n,
        param_dim: ds.meta.n_p,
        param_scale: Vec::new(),
        depths: Default::default(),
        lambda_d: args.lambda_d,
        lambda_e: args.lambda_e,
    };
    config.validate()?;
    let train_cfg = TrainConfig {
        lr: args.lr,
        batch_graphs: args.batch,
        curriculum_threshold: args.threshold,
        max_rollout: args.max_rollout,
        noise_amplitude: args.noise,
        plateau_epochs: args.plateau,
        lr_factor: args.lr_factor,
        clip_norm: args.clip,
        seed,
        epochs: args.epochs,
        max_seconds: args.max_seconds,
        checkpoint_every: args.checkpoint_every,
    };
    write_resolved_config(&args.out, "model.json", &config)?;
    write_resolved_config(&args.out, "train_config.json", &train_cfg)?;

    let (mut model, mut adam) = match &args.resume {
        Some(ckpt) => {
            let mut adam = AdamState::new(&Model::new(config.clone(), 0)?.params);
            let model = load_model(&config, ckpt, Some(&mut adam))
                .with_context(|| format!("resuming from {}", ckpt.display()))?;
            println!("resumed from {} at optimizer step {}", ckpt.display(), adam.step);
            (model, adam)
        }
        None => {
            let model = Model::new(config.clone(), seed)?;
            let adam = AdamState::new(&model.params);
            (model, adam)
        }
    };

    let mut data: Box<dyn TrainingSet> = if args.resample {
        if ds.meta.kind != AdvectionKind::Box {
            bail!("--resample requires a box-kind dataset");
        }
        Box::new(ResamplingBoxSet::new(&ds, &config, args.limit)?)
    } else {
        Box::new(InMemoryTrainingSet::from_dataset(&ds, &config, args.limit)?)
    };

    let report = train(&mut model, &mut adam, data.as_mut(), &train_cfg, Some(&args.out))?;
    println!(
        "trained {} epochs ({} iterations): final epoch loss {:.6}, rollout length {}, lr {:.2e}",
        report.epochs_run, report.iterations_run, report.final_epoch_loss, report.rollout_length, report.final_lr
    );
    if let Some(path) = report.checkpoint_path {
        println!("checkpoint: {}", path.display());
    }
    Ok(())
}
