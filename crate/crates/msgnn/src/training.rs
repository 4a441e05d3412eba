//! Training protocol: the composite loss (field MSE + weighted Dirichlet MAE
//! + weighted edge-gradient MSE), rollout-length curriculum, input noise,
//! plateau learning-rate decay, graph batching and checkpointing.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{exact_frames, sim_inputs, sim_nodes, Dataset, DatasetMeta};
use crate::datagen::{derive_seed, AdvectionKind};
use crate::error::{Error, Result};
use crate::geometry::{Domain, EdgeSet, NodeSet};
use crate::model::{FieldFrame, Model, ModelConfig, ModelTopology};
use crate::neural::{clip_gradients, write_checkpoint, AdamConfig, AdamState, Tape, TapeGrads, Var};

/// Training hyper-parameters. Defaults follow the advection setup; the
/// curriculum threshold for flow problems is 0.005.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_graphs: usize,
    pub curriculum_threshold: f64,
    pub max_rollout: usize,
    pub noise_amplitude: f64,
    pub plateau_epochs: usize,
    pub lr_factor: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Passes over the dataset.
    pub epochs: usize,
    /// Optional wall-clock cap; training stops gracefully when exceeded.
    pub max_seconds: Option<f64>,
    /// Write a checkpoint every this many epochs (0 disables periodic ones).
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn advection_defaults(seed: u64, epochs: usize) -> Self {
        Self {
            lr: 1e-4,
            batch_graphs: 8,
            curriculum_threshold: 0.01,
            max_rollout: 10,
            noise_amplitude: 0.01,
            plateau_epochs: 5,
            lr_factor: 0.5,
            clip_norm: 1.0,
            seed,
            epochs,
            max_seconds: None,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0
            || self.batch_graphs == 0
            || self.curriculum_threshold <= 0.0
            || self.max_rollout == 0
            || self.noise_amplitude < 0.0
            || self.plateau_epochs == 0
            || !(0.0..1.0).contains(&self.lr_factor)
            || self.clip_norm <= 0.0
            || self.epochs == 0
        {
            return Err(Error::Config(format!("invalid training configuration: {self:?}")));
        }
        Ok(())
    }
}

/// Components of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total: f64,
    pub mse: f64,
    pub dirichlet_mae: f64,
    pub edge_term: f64,
}

/// Precomputed per-graph structures for the loss: edge endpoints, inverse
/// edge lengths and the Dirichlet node indices.
#[derive(Debug, Clone)]
pub struct LossContext {
    pub senders: Arc<Vec<usize>>,
    pub receivers: Arc<Vec<usize>>,
    pub inv_len: Arc<Vec<f64>>,
    pub dirichlet: Arc<Vec<usize>>,
    pub lambda_d: f64,
    pub lambda_e: f64,
}

impl LossContext {
    pub fn new(
        nodes: &NodeSet,
        senders: &[usize],
        receivers: &[usize],
        rel_pos: &[[f64; 2]],
        lambda_d: f64,
        lambda_e: f64,
    ) -> Result<Self> {
        let mut inv_len = Vec::with_capacity(rel_pos.len());
        for (k, rp) in rel_pos.iter().enumerate() {
            let len = (rp[0] * rp[0] + rp[1] * rp[1]).sqrt();
            if len == 0.0 {
                return Err(Error::Data(format!("edge {k} has zero length")));
            }
            inv_len.push(1.0 / len);
        }
        Ok(Self {
            senders: Arc::new(senders.to_vec()),
            receivers: Arc::new(receivers.to_vec()),
            inv_len: Arc::new(inv_len),
            dirichlet: Arc::new(nodes.dirichlet_indices()),
            lambda_d,
            lambda_e,
        })
    }

    pub fn from_edge_set(nodes: &NodeSet, edges: &EdgeSet, lambda_d: f64, lambda_e: f64) -> Result<Self> {
        Self::new(nodes, &edges.senders, &edges.receivers, &edges.rel_pos, lambda_d, lambda_e)
    }
}

/// Value-level composite loss between a prediction and the truth on the same
/// node set and level-1 edges.
pub fn loss(
    pred: &FieldFrame,
    truth: &FieldFrame,
    nodes: &NodeSet,
    edges: &EdgeSet,
    lambda_d: f64,
    lambda_e: f64,
) -> Result<LossTerms> {
    if pred.n != truth.n || pred.values.len() != truth.values.len() {
        return Err(Error::Contract("prediction and truth frames are not aligned".into()));
    }
    if pred.n_nodes() != nodes.len() {
        return Err(Error::Contract("frames are not aligned with the node set".into()));
    }
    let n = pred.n;
    let n_values = pred.values.len();
    let mse = pred
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n_values as f64;

    let dirichlet: Vec<usize> = nodes.dirichlet_indices();
    let dirichlet_mae = if dirichlet.is_empty() {
        0.0
    } else {
        let mut acc = 0.0;
        for &i in &dirichlet {
            for c in 0..n {
                acc += (pred.values[i * n + c] - truth.values[i * n + c]).abs();
            }
        }
        acc / (dirichlet.len() * n) as f64
    };

    let mut edge_term = 0.0;
    if !edges.senders.is_empty() {
        for k in 0..edges.len() {
            let s = edges.senders[k];
            let r = edges.receivers[k];
            let rp = edges.rel_pos[k];
            let len = (rp[0] * rp[0] + rp[1] * rp[1]).sqrt();
            if len == 0.0 {
                return Err(Error::Data(format!("edge {k} has zero length")));
            }
            for c in 0..n {
                let dq_pred = (pred.values[r * n + c] - pred.values[s * n + c]) / len;
                let dq_true = (truth.values[r * n + c] - truth.values[s * n + c]) / len;
                edge_term += (dq_pred - dq_true) * (dq_pred - dq_true);
            }
        }
        edge_term /= (edges.len() * n) as f64;
    }

    let total = mse + lambda_d * dirichlet_mae + lambda_e * edge_term;
    Ok(LossTerms { total, mse, dirichlet_mae, edge_term })
}

/// Loss recorded on a tape against constant truth values; returns the scalar
/// variable plus the evaluated components.
pub fn loss_on_tape(
    tape: &mut Tape,
    ctx: &LossContext,
    pred: Var,
    truth: &Array2<f64>,
) -> Result<(Var, LossTerms)> {
    let n = truth.ncols();
    let truth_var = tape.constant(truth.clone());
    let diff = tape.sub(pred, truth_var);
    let sq = tape.square(diff);
    let mse = tape.mean_all(sq);
    let mut total = mse;

    let mut terms = LossTerms { mse: tape.scalar(mse), ..Default::default() };

    if ctx.lambda_d != 0.0 && !ctx.dirichlet.is_empty() {
        let pred_d = tape.gather_rows(pred, ctx.dirichlet.clone());
        let mut truth_d = Array2::zeros((ctx.dirichlet.len(), n));
        for (j, &i) in ctx.dirichlet.iter().enumerate() {
            for c in 0..n {
                truth_d[[j, c]] = truth[[i, c]];
            }
        }
        let truth_d = tape.constant(truth_d);
        let dd = tape.sub(pred_d, truth_d);
        let ad = tape.abs(dd);
        let mae = tape.mean_all(ad);
        terms.dirichlet_mae = tape.scalar(mae);
        let weighted = tape.scale(mae, ctx.lambda_d);
        total = tape.add(total, weighted);
    }

    if ctx.lambda_e != 0.0 && !ctx.senders.is_empty() {
        let pr = tape.gather_rows(pred, ctx.receivers.clone());
        let ps = tape.gather_rows(pred, ctx.senders.clone());
        let dp = tape.sub(pr, ps);
        let dq_pred = tape.scale_rows(dp, ctx.inv_len.clone());
        let mut dq_truth = Array2::zeros((ctx.senders.len(), n));
        for k in 0..ctx.senders.len() {
            for c in 0..n {
                dq_truth[[k, c]] =
                    (truth[[ctx.receivers[k], c]] - truth[[ctx.senders[k], c]]) * ctx.inv_len[k];
            }
        }
        let dq_truth = tape.constant(dq_truth);
        let de = tape.sub(dq_pred, dq_truth);
        let se = tape.square(de);
        let edge = tape.mean_all(se);
        terms.edge_term = tape.scalar(edge);
        let weighted = tape.scale(edge, ctx.lambda_e);
        total = tape.add(total, weighted);
    }

    terms.total = tape.scalar(total);
    Ok((total, terms))
}

/// One simulation prepared for training: node set, frames, the model-ready
/// topology and the loss context, all shareable across threads.
#[derive(Clone)]
pub struct TrainSample {
    pub nodes: Arc<NodeSet>,
    pub frames: Arc<Vec<f64>>,
    pub n_frames: usize,
    pub n: usize,
    pub topo: Arc<ModelTopology>,
    pub loss_ctx: Arc<LossContext>,
}

impl TrainSample {
    pub fn build(
        model_cfg: &ModelConfig,
        domain: &Domain,
        nodes: NodeSet,
        frames: Vec<f64>,
        n_frames: usize,
    ) -> Result<Self> {
        let hierarchy = crate::graphs::build_hierarchy(&nodes, model_cfg.scales, &model_cfg.cell_sizes, model_cfg.k, domain)?;
        let topo = ModelTopology::new(&hierarchy)?;
        let finest = hierarchy.finest();
        let rel: Vec<[f64; 2]> = finest.edge_attrs.clone();
        let loss_ctx = LossContext::new(&nodes, &finest.senders, &finest.receivers, &rel, model_cfg.lambda_d, model_cfg.lambda_e)?;
        Ok(Self {
            nodes: Arc::new(nodes),
            frames: Arc::new(frames),
            n_frames,
            n: model_cfg.field_dim,
            topo: Arc::new(topo),
            loss_ctx: Arc::new(loss_ctx),
        })
    }

    pub fn frame(&self, idx: usize) -> &[f64] {
        let size = self.nodes.len() * self.n;
        &self.frames[idx * size..(idx + 1) * size]
    }
}

/// Source of training samples; `epoch_begin` may resample the node sets.
pub trait TrainingSet: Send {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn epoch_begin(&mut self, _epoch: usize) -> Result<()> {
        Ok(())
    }
    fn sample(&self, idx: usize) -> TrainSample;
}

/// Fixed samples loaded from a dataset directory.
pub struct InMemoryTrainingSet {
    samples: Vec<TrainSample>,
}

impl InMemoryTrainingSet {
    pub fn from_dataset(ds: &Dataset, model_cfg: &ModelConfig, limit: Option<usize>) -> Result<Self> {
        let domain = ds.meta.domain();
        let count = limit.unwrap_or(ds.meta.sim_count).min(ds.meta.sim_count);
        let samples: Vec<Result<TrainSample>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let traj = ds.load_sim(i)?;
                TrainSample::build(model_cfg, &domain, traj.nodes, traj.frames, traj.n_frames)
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        for s in samples {
            out.push(s?);
        }
        Ok(Self { samples: out })
    }

    pub fn from_samples(samples: Vec<TrainSample>) -> Self {
        Self { samples }
    }
}

impl TrainingSet for InMemoryTrainingSet {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn sample(&self, idx: usize) -> TrainSample {
        self.samples[idx].clone()
    }
}

/// Box-advection set that redraws every node set at the beginning of each
/// epoch and re-evaluates the exact oracle there. Spacing is jittered per
/// simulation and epoch within `spacing_range` times the dataset spacing,
/// exposing the model to a span of edge lengths.
pub struct ResamplingBoxSet {
    meta: DatasetMeta,
    domain: Domain,
    model_cfg: ModelConfig,
    inputs: Vec<(crate::datagen::FourierIc, [f64; 2])>,
    samples: Vec<TrainSample>,
    pub spacing_range: (f64, f64),
}

impl ResamplingBoxSet {
    pub fn new(ds: &Dataset, model_cfg: &ModelConfig, limit: Option<usize>) -> Result<Self> {
        if ds.meta.kind != AdvectionKind::Box {
            return Err(Error::Config("node resampling requires a box-kind dataset (exact oracle)".into()));
        }
        let domain = ds.meta.domain();
        let count = limit.unwrap_or(ds.meta.sim_count).min(ds.meta.sim_count);
        let inputs: Vec<(crate::datagen::FourierIc, [f64; 2])> = ds.meta.sims[..count]
            .par_iter()
            .map(|sim| sim_inputs(ds.meta.kind, sim.seed, &domain))
            .collect();
        let mut set = Self {
            meta: ds.meta.clone(),
            domain,
            model_cfg: model_cfg.clone(),
            inputs,
            samples: Vec::new(),
            spacing_range: (0.6, 1.35),
        };
        set.epoch_begin(0)?;
        Ok(set)
    }
}

impl TrainingSet for ResamplingBoxSet {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn epoch_begin(&mut self, epoch: usize) -> Result<()> {
        let meta = &self.meta;
        let domain = self.domain;
        let model_cfg = &self.model_cfg;
        let (lo, hi) = self.spacing_range;
        let samples: Vec<Result<TrainSample>> = self
            .inputs
            .par_iter()
            .enumerate()
            .map(|(i, (ic, velocity))| {
                let sim_seed = meta.sims[i].seed;
                let node_seed = derive_seed(sim_seed, 1000 + epoch as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(node_seed, 7));
                let spacing = meta.spacing * rng.gen_range(lo..hi);
                let nodes = sim_nodes(&domain, spacing, node_seed, *velocity)?;
                let frames = exact_frames(ic, *velocity, &nodes, meta.n_steps, meta.dt, &domain)?;
                TrainSample::build(model_cfg, &domain, nodes, frames, meta.n_steps)
            })
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for s in samples {
            out.push(s?);
        }
        self.samples = out;
        Ok(())
    }

    fn sample(&self, idx: usize) -> TrainSample {
        self.samples[idx].clone()
    }
}

/// One comma-separated log record per training iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub rollout_len: usize,
    pub lr: f64,
    pub loss: f64,
    pub mse: f64,
    pub dirichlet_mae: f64,
    pub edge_term: f64,
}

impl LogRecord {
    pub fn csv_header() -> &'static str {
        "epoch,iteration,rollout_len,lr,loss,mse,dirichlet_mae,edge_term"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch, self.iteration, self.rollout_len, self.lr, self.loss, self.mse, self.dirichlet_mae, self.edge_term
        )
    }
}

/// Outcome of a training run.
#[derive(Debug)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub iterations_run: usize,
    pub final_epoch_loss: f64,
    pub rollout_length: usize,
    pub final_lr: f64,
    pub log: Vec<LogRecord>,
    /// Set when training halted on divergence, with the diagnostic.
    pub halted: Option<String>,
    pub checkpoint_path: Option<PathBuf>,
}

fn write_log(out_dir: Option<&Path>, log: &[LogRecord]) -> Result<()> {
    if let Some(dir) = out_dir {
        let path = dir.join("log.csv");
        let display = path.display().to_string();
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&display, e))?;
        writeln!(file, "{}", LogRecord::csv_header()).map_err(|e| Error::io(&display, e))?;
        for r in log {
            writeln!(file, "{}", r.to_csv()).map_err(|e| Error::io(&display, e))?;
        }
    }
    Ok(())
}

fn save_checkpoint(out_dir: Option<&Path>, name: &str, model: &Model, adam: &AdamState) -> Result<Option<PathBuf>> {
    let Some(dir) = out_dir else { return Ok(None) };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(name);
    let display = path.display().to_string();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model.params, Some(adam))?;
    fs::write(&path, buf).map_err(|e| Error::io(&display, e))?;
    Ok(Some(path))
}

/// Train a model. Per iteration: sample a batch of graphs and a random
/// initial time-point per graph, add uniform noise to the initial field,
/// roll out the current curriculum length, and after every time-step clip
/// the batch-summed gradients and take one Adam step. The curriculum grows
/// by one whenever the epoch-mean loss drops below the threshold, and the
/// learning rate halves after `plateau_epochs` without improvement.
pub fn train(
    model: &mut Model,
    adam: &mut AdamState,
    data: &mut dyn TrainingSet,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr = cfg.lr;
    let mut rollout_len = 1usize;
    let mut best_epoch_loss = f64::INFINITY;
    let mut epochs_without_improvement = 0usize;
    let mut log: Vec<LogRecord> = Vec::new();
    let mut iterations_run = 0usize;
    let mut epochs_run = 0usize;
    let mut halted = None;
    let mut last_epoch_loss = f64::NAN;
    let n = model.config.field_dim;

    'training: for epoch in 0..cfg.epochs {
        data.epoch_begin(epoch)?;
        let n_sims = data.len();
        let mut order: Vec<usize> = (0..n_sims).collect();
        // Fisher-Yates with the run RNG keeps epochs reproducible.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss_sum = 0.0;
        let mut epoch_loss_count = 0usize;

        for (iteration, chunk) in order.chunks(cfg.batch_graphs).enumerate() {
            let samples: Vec<TrainSample> = chunk.iter().map(|&i| data.sample(i)).collect();
            let min_frames = samples.iter().map(|s| s.n_frames).min().unwrap();
            if min_frames < 2 {
                return Err(Error::Config("simulations need at least two frames".into()));
            }
            let r = rollout_len.min(min_frames - 1);

            // Initial time-points and noise, drawn sequentially for
            // reproducibility regardless of thread count.
            let t0s: Vec<usize> = samples
                .iter()
                .map(|s| rng.gen_range(0..=(s.n_frames - 1 - r)))
                .collect();
            let mut states: Vec<Array2<f64>> = samples
                .iter()
                .zip(&t0s)
                .map(|(s, &t0)| {
                    let frame = s.frame(t0);
                    let mut m = Array2::from_shape_vec((s.nodes.len(), n), frame.to_vec()).unwrap();
                    if cfg.noise_amplitude > 0.0 {
                        for v in m.iter_mut() {
                            *v += rng.gen_range(-cfg.noise_amplitude..cfg.noise_amplitude);
                        }
                    }
                    m
                })
                .collect();

            let mut iter_terms = LossTerms::default();
            for step in 1..=r {
                let outcome: Vec<Result<(LossTerms, TapeGrads, Array2<f64>)>> = samples
                    .par_iter()
                    .zip(states.par_iter())
                    .zip(t0s.par_iter())
                    .map(|((sample, state), &t0)| {
                        let mut tape = Tape::new();
                        let pred = model.forward_step(&mut tape, &sample.topo, state, &sample.nodes)?;
                        let truth_slice = sample.frame(t0 + step);
                        let truth = Array2::from_shape_vec((sample.nodes.len(), n), truth_slice.to_vec())
                            .map_err(|e| Error::Contract(format!("truth shape: {e}")))?;
                        let (loss_var, terms) = loss_on_tape(&mut tape, &sample.loss_ctx, pred, &truth)?;
                        let grads = tape.backward(loss_var)?;
                        let pred_values = tape.value(pred).clone();
                        Ok((terms, grads, pred_values))
                    })
                    .collect();

                let mut grads_in_order = Vec::with_capacity(outcome.len());
                let mut step_finite = true;
                for (slot, res) in outcome.into_iter().enumerate() {
                    let (terms, grads, pred_values) = res?;
                    if !terms.total.is_finite() {
                        step_finite = false;
                    }
                    iter_terms.total += terms.total;
                    iter_terms.mse += terms.mse;
                    iter_terms.dirichlet_mae += terms.dirichlet_mae;
                    iter_terms.edge_term += terms.edge_term;
                    epoch_loss_sum += terms.total;
                    epoch_loss_count += 1;
                    grads_in_order.push(grads);
                    states[slot] = pred_values;
                }

                if !step_finite {
                    halted = Some(format!("non-finite loss at epoch {epoch}, iteration {iteration}, step {step}"));
                    break 'training;
                }
                let summed = TapeGrads::sum(grads_in_order).expect("non-empty batch");
                model.params.zero_grads();
                summed.accumulate_into(&mut model.params);
                clip_gradients(&mut model.params, cfg.clip_norm);
                if let Err(e) = adam.step(&mut model.params, &AdamConfig::with_lr(lr)) {
                    halted = Some(format!("{e} at epoch {epoch}, iteration {iteration}, step {step}"));
                    break 'training;
                }
            }

            let denom = (samples.len() * r) as f64;
            log.push(LogRecord {
                epoch,
                iteration,
                rollout_len: r,
                lr,
                loss: iter_terms.total / denom,
                mse: iter_terms.mse / denom,
                dirichlet_mae: iter_terms.dirichlet_mae / denom,
                edge_term: iter_terms.edge_term / denom,
            });
            iterations_run += 1;

            if let Some(limit) = cfg.max_seconds {
                if start.elapsed().as_secs_f64() > limit {
                    epochs_run = epoch + 1;
                    last_epoch_loss = epoch_loss_sum / epoch_loss_count.max(1) as f64;
                    break 'training;
                }
            }
        }

        epochs_run = epoch + 1;
        let epoch_loss = epoch_loss_sum / epoch_loss_count.max(1) as f64;
        last_epoch_loss = epoch_loss;

        // Curriculum: one increment per epoch under the threshold.
        if epoch_loss < cfg.curriculum_threshold && rollout_len < cfg.max_rollout {
            rollout_len += 1;
        }
        // Plateau decay.
        if epoch_loss < best_epoch_loss {
            best_epoch_loss = epoch_loss;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= cfg.plateau_epochs {
                lr *= cfg.lr_factor;
                epochs_without_improvement = 0;
            }
        }

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            save_checkpoint(out_dir, &format!("ckpt_epoch_{:05}.msck", epoch + 1), model, adam)?;
        }
        if let Some(limit) = cfg.max_seconds {
            if start.elapsed().as_secs_f64() > limit {
                break 'training;
            }
        }
    }

    write_log(out_dir, &log)?;
    let checkpoint_path = save_checkpoint(out_dir, "ckpt_final.msck", model, adam)?;
    let report = TrainReport {
        epochs_run,
        iterations_run,
        final_epoch_loss: last_epoch_loss,
        rollout_length: rollout_len,
        final_lr: lr,
        log,
        halted: halted.clone(),
        checkpoint_path,
    };
    if let Some(reason) = halted {
        return Err(Error::NonFinite(format!("training halted: {reason} (checkpoint of last finite state saved)")));
    }
    Ok(report)
}

/// Per-step mean absolute error between two frame sequences of equal layout.
pub fn mae_per_step(pred: &[FieldFrame], truth: &[FieldFrame]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::Data(format!(
            "frame-count mismatch: {} predicted vs {} truth",
            pred.len(),
            truth.len()
        )));
    }
    let mut out = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        if p.values.len() != t.values.len() {
            return Err(Error::Data("frames of different sizes".into()));
        }
        let mae = p
            .values
            .iter()
            .zip(&t.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / p.values.len() as f64;
        out.push(mae);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_nodes;
    use crate::model::MlpDepths;

    fn two_node_setup() -> (NodeSet, EdgeSet) {
        let nodes = NodeSet {
            positions: vec![[0.0, 0.0], [1.0, 0.0]],
            omega: vec![0, 0],
            frozen: vec![false, false],
            params: Vec::new(),
            n_p: 0,
        };
        let edges = EdgeSet {
            senders: vec![0],
            receivers: vec![1],
            rel_pos: vec![[1.0, 0.0]],
        };
        (nodes, edges)
    }

    /// Hand evaluation: truth (0, 0), pred (1, 0), unit edge, lambda_e = 0.5:
    /// MSE 0.5 + edge term 0.5 -> total exactly 1.0.
    #[test]
    fn loss_hand_example_is_one() {
        let (nodes, edges) = two_node_setup();
        let pred = FieldFrame::new(vec![1.0, 0.0], 1, 0.0).unwrap();
        let truth = FieldFrame::new(vec![0.0, 0.0], 1, 0.0).unwrap();
        let terms = loss(&pred, &truth, &nodes, &edges, 0.25, 0.5).unwrap();
        assert_eq!(terms.mse, 0.5);
        assert_eq!(terms.dirichlet_mae, 0.0);
        assert_eq!(terms.edge_term, 1.0);
        assert_eq!(terms.total, 1.0);
    }

    #[test]
    fn loss_zero_when_exact() {
        let (nodes, edges) = two_node_setup();
        let truth = FieldFrame::new(vec![0.3, -0.4], 1, 0.0).unwrap();
        for (ld, le) in [(0.0, 0.0), (0.25, 0.5), (3.0, 7.0)] {
            let terms = loss(&truth, &truth, &nodes, &edges, ld, le).unwrap();
            assert_eq!(terms.total, 0.0);
        }
    }

    #[test]
    fn loss_weights_zero_reduce_to_mse() {
        let (mut nodes, edges) = two_node_setup();
        nodes.omega[0] = 1;
        let pred = FieldFrame::new(vec![0.5, 0.25], 1, 0.0).unwrap();
        let truth = FieldFrame::new(vec![0.0, 0.0], 1, 0.0).unwrap();
        let terms = loss(&pred, &truth, &nodes, &edges, 0.0, 0.0).unwrap();
        assert_eq!(terms.total, terms.mse);
        assert!(terms.dirichlet_mae > 0.0); // component still reported
    }

    #[test]
    fn loss_zero_length_edge_is_data_error() {
        let (nodes, mut edges) = two_node_setup();
        edges.rel_pos[0] = [0.0, 0.0];
        let f = FieldFrame::new(vec![0.0, 0.0], 1, 0.0).unwrap();
        assert!(matches!(loss(&f, &f, &nodes, &edges, 0.1, 0.1), Err(Error::Data(_))));
        assert!(LossContext::from_edge_set(&nodes, &edges, 0.1, 0.1).is_err());
    }

    #[test]
    fn tape_loss_matches_value_loss() {
        let mut nodes = random_nodes(&Domain::unit_periodic(), 30, 0, 3);
        nodes.omega[4] = 1;
        nodes.omega[9] = 1;
        let edges = crate::geometry::knn_edges(&nodes, 3, &crate::geometry::PeriodicSpec::xy(1.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pred_vals: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() - 0.5).collect();
        let truth_vals: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() - 0.5).collect();
        let pred = FieldFrame::new(pred_vals.clone(), 2, 0.0).unwrap();
        let truth = FieldFrame::new(truth_vals.clone(), 2, 0.0).unwrap();
        let direct = loss(&pred, &truth, &nodes, &edges, 0.25, 0.5).unwrap();

        let ctx = LossContext::from_edge_set(&nodes, &edges, 0.25, 0.5).unwrap();
        let mut tape = Tape::new();
        let pv = tape.constant(Array2::from_shape_vec((30, 2), pred_vals).unwrap());
        let tm = Array2::from_shape_vec((30, 2), truth_vals).unwrap();
        let (_, terms) = loss_on_tape(&mut tape, &ctx, pv, &tm).unwrap();
        assert!((terms.total - direct.total).abs() < 1e-12);
        assert!((terms.mse - direct.mse).abs() < 1e-12);
        assert!((terms.dirichlet_mae - direct.dirichlet_mae).abs() < 1e-12);
        assert!((terms.edge_term - direct.edge_term).abs() < 1e-12);
    }

    fn tiny_model() -> Model {
        Model::new(
            ModelConfig {
                scales: 1,
                mp_layers: vec![1],
                k: 3,
                cell_sizes: vec![],
                latent_width: 8,
                field_dim: 1,
                param_dim: 2,
                param_scale: Vec::new(),
                depths: MlpDepths::default(),
                lambda_d: 0.25,
                lambda_e: 0.5,
            },
            0,
        )
        .unwrap()
    }

    fn tiny_set(model: &Model, n_sims: usize) -> InMemoryTrainingSet {
        let domain = Domain::unit_periodic();
        let samples = (0..n_sims)
            .map(|i| {
                let nodes = random_nodes(&domain, 16, 2, i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
                let frames: Vec<f64> = (0..16 * 4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                TrainSample::build(&model.config, &domain, nodes, frames, 4).unwrap()
            })
            .collect();
        InMemoryTrainingSet::from_samples(samples)
    }

    #[test]
    fn training_is_reproducible() {
        let run = || {
            let mut model = tiny_model();
            let mut adam = AdamState::new(&model.params);
            let mut set = tiny_set(&model, 6);
            let mut cfg = TrainConfig::advection_defaults(9, 3);
            cfg.batch_graphs = 2;
            let report = train(&mut model, &mut adam, &mut set, &cfg, None).unwrap();
            (report.log, model.params.iter().flat_map(|t| t.values.clone()).collect::<Vec<f64>>())
        };
        let (log_a, params_a) = run();
        let (log_b, params_b) = run();
        assert_eq!(log_a, log_b, "loss curves must match bit for bit");
        assert_eq!(params_a, params_b);
        assert_eq!(log_a.len(), 3 * 3); // 6 sims / batch 2 = 3 iterations x 3 epochs
    }

    #[test]
    fn curriculum_counter_matches_crossings() {
        // Threshold far above any achievable loss: every epoch crosses it,
        // so after 3 epochs the length reaches 4.
        let mut model = tiny_model();
        let mut adam = AdamState::new(&model.params);
        let mut set = tiny_set(&model, 2);
        let mut cfg = TrainConfig::advection_defaults(1, 3);
        cfg.batch_graphs = 2;
        cfg.curriculum_threshold = 1e9;
        let report = train(&mut model, &mut adam, &mut set, &cfg, None).unwrap();
        assert_eq!(report.rollout_length, 4);
        // And the curriculum length never exceeds max_rollout.
        let mut cfg2 = cfg.clone();
        cfg2.max_rollout = 2;
        cfg2.epochs = 5;
        let mut model2 = tiny_model();
        let mut adam2 = AdamState::new(&model2.params);
        let mut set2 = tiny_set(&model2, 2);
        let report2 = train(&mut model2, &mut adam2, &mut set2, &cfg2, None).unwrap();
        assert_eq!(report2.rollout_length, 2);
    }

    #[test]
    fn divergence_halts_with_checkpoint() {
        let mut model = tiny_model();
        // Poison one weight so the forward pass explodes.
        let idx = model.params.index_of("dec.w0").unwrap();
        model.params.tensor_mut(idx).values[0] = f64::INFINITY;
        let mut adam = AdamState::new(&model.params);
        let mut set = tiny_set(&model, 2);
        let mut cfg = TrainConfig::advection_defaults(1, 2);
        cfg.batch_graphs = 2;
        let dir = tempfile::tempdir().unwrap();
        let err = train(&mut model, &mut adam, &mut set, &cfg, Some(dir.path())).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(dir.path().join("ckpt_final.msck").exists());
    }

    #[test]
    fn one_step_changes_only_gradient_bearing_params() {
        let mut model = tiny_model();
        let before: Vec<Vec<f64>> = model.params.iter().map(|t| t.values.clone()).collect();
        let domain = Domain::unit_periodic();
        let nodes = random_nodes(&domain, 16, 2, 1);
        let sample = TrainSample::build(&model.config, &domain, nodes, vec![0.1; 32], 2).unwrap();
        let mut tape = Tape::new();
        let state = Array2::from_shape_vec((16, 1), sample.frame(0).to_vec()).unwrap();
        let pred = model.forward_step(&mut tape, &sample.topo, &state, &sample.nodes).unwrap();
        let truth = Array2::from_shape_vec((16, 1), sample.frame(1).to_vec()).unwrap();
        let (lv, _) = loss_on_tape(&mut tape, &sample.loss_ctx, pred, &truth).unwrap();
        let grads = tape.backward(lv).unwrap();
        model.params.zero_grads();
        grads.accumulate_into(&mut model.params);
        let mut adam = AdamState::new(&model.params);
        adam.step(&mut model.params, &AdamConfig::with_lr(1e-3)).unwrap();
        for (idx, t) in model.params.iter().enumerate() {
            let changed = t.values != before[idx];
            let has_grad = t.grad.iter().any(|&g| g != 0.0);
            assert_eq!(changed, has_grad, "{} changed={changed} has_grad={has_grad}", t.name);
        }
    }

    #[test]
    fn mae_per_step_constant_offset() {
        let a: Vec<FieldFrame> = (0..3).map(|i| FieldFrame::new(vec![i as f64; 4], 1, 0.0).unwrap()).collect();
        let b: Vec<FieldFrame> = (0..3).map(|i| FieldFrame::new(vec![i as f64 + 0.5; 4], 1, 0.0).unwrap()).collect();
        let mae = mae_per_step(&b, &a).unwrap();
        for m in mae {
            assert!((m - 0.5).abs() < 1e-15);
        }
        assert!(mae_per_step(&a[..2], &a).is_err());
    }
}
