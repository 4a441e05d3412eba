//! The multi-scale GNN forward pass: encode node/edge attributes, message
//! passing down and up the graph hierarchy (a V-cycle), decode to the field
//! at the next time-step, and autoregressive rollout.

use std::sync::Arc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, NodeSet};
use crate::graphs::{build_hierarchy, GraphHierarchy};
use crate::neural::{mlp_forward, register_mlp, MlpSpec, ParamSet, Tape, Var};
use crate::remesh::{self, RemeshConfig};

/// Dense-layer counts per MLP role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpDepths {
    pub edge_encoder: usize,
    pub node_encoder: usize,
    pub edge_mp: usize,
    pub node_mp: usize,
    pub down_mp: usize,
    pub up_mp: usize,
    pub decoder: usize,
}

impl Default for MlpDepths {
    fn default() -> Self {
        Self { edge_encoder: 2, node_encoder: 2, edge_mp: 2, node_mp: 2, down_mp: 2, up_mp: 2, decoder: 2 }
    }
}

/// Full architectural description of a model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of scales L.
    pub scales: usize,
    /// Message-passing layer counts per scale, `M_1..M_L`. Scales below the
    /// coarsest run their count twice: once descending, once ascending, with
    /// distinct parameters.
    pub mp_layers: Vec<usize>,
    /// Neighbour count of the level-1 k-NN graph.
    pub k: usize,
    /// Grid cell sizes for levels 2..L, strictly increasing.
    pub cell_sizes: Vec<(f64, f64)>,
    pub latent_width: usize,
    /// Field dimensionality n.
    pub field_dim: usize,
    /// Physical-parameter dimensionality n_p.
    pub param_dim: usize,
    /// Divisors applied to physical parameters before encoding (keeps inputs
    /// O(1), e.g. 1000 for a Reynolds number). Empty means all ones.
    #[serde(default)]
    pub param_scale: Vec<f64>,
    #[serde(default)]
    pub depths: MlpDepths,
    /// Dirichlet-term weight in the training loss.
    pub lambda_d: f64,
    /// Edge-gradient-term weight in the training loss.
    pub lambda_e: f64,
}

impl ModelConfig {
    /// Defaults for advection models: k = 4, cells 0.02/0.04/0.08, three
    /// scales with M = (2, 2, 4), scalar field with a 2-vector velocity
    /// parameter.
    pub fn advection_defaults() -> Self {
        Self {
            scales: 3,
            mp_layers: vec![2, 2, 4],
            k: 4,
            cell_sizes: vec![(0.02, 0.02), (0.04, 0.04)],
            latent_width: 128,
            field_dim: 1,
            param_dim: 2,
            param_scale: Vec::new(),
            depths: MlpDepths::default(),
            lambda_d: 0.25,
            lambda_e: 0.5,
        }
    }

    /// Defaults for incompressible-flow models: k = 8, cells 0.15/0.30/0.60,
    /// three scales with M = (4, 3, 2), deeper edge/transfer MLPs, field
    /// (u, v, p) with the Reynolds number (scaled by 1/1000) as parameter.
    pub fn flow_defaults() -> Self {
        Self {
            scales: 3,
            mp_layers: vec![4, 3, 2],
            k: 8,
            cell_sizes: vec![(0.15, 0.15), (0.30, 0.30)],
            latent_width: 128,
            field_dim: 3,
            param_dim: 1,
            param_scale: vec![1000.0],
            depths: MlpDepths { edge_mp: 3, down_mp: 3, up_mp: 3, ..MlpDepths::default() },
            lambda_d: 0.25,
            lambda_e: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 {
            return Err(Error::Config("model needs at least one scale".into()));
        }
        if self.mp_layers.len() != self.scales || self.mp_layers.iter().any(|&m| m == 0) {
            return Err(Error::Config(format!(
                "need one positive MP count per scale, got {:?} for L = {}",
                self.mp_layers, self.scales
            )));
        }
        if self.cell_sizes.len() != self.scales - 1 {
            return Err(Error::Config(format!(
                "need {} cell sizes for {} scales, got {}",
                self.scales - 1,
                self.scales,
                self.cell_sizes.len()
            )));
        }
        if self.latent_width == 0 || self.field_dim == 0 {
            return Err(Error::Config("latent width and field dim must be >= 1".into()));
        }
        if !self.param_scale.is_empty() && self.param_scale.len() != self.param_dim {
            return Err(Error::Config("param_scale length must match param_dim".into()));
        }
        Ok(())
    }

    pub fn node_input_width(&self) -> usize {
        self.field_dim + self.param_dim + 1
    }

    fn node_encoder_spec(&self) -> MlpSpec {
        MlpSpec::new(self.node_input_width(), self.latent_width, self.latent_width, self.depths.node_encoder, true)
    }

    fn edge_encoder_spec(&self) -> MlpSpec {
        MlpSpec::new(2, self.latent_width, self.latent_width, self.depths.edge_encoder, true)
    }

    fn edge_mp_spec(&self) -> MlpSpec {
        MlpSpec::new(3 * self.latent_width, self.latent_width, self.latent_width, self.depths.edge_mp, true)
    }

    fn node_mp_spec(&self) -> MlpSpec {
        MlpSpec::new(2 * self.latent_width, self.latent_width, self.latent_width, self.depths.node_mp, true)
    }

    fn down_mp_spec(&self) -> MlpSpec {
        MlpSpec::new(2 + self.latent_width, self.latent_width, self.latent_width, self.depths.down_mp, true)
    }

    fn up_mp_spec(&self) -> MlpSpec {
        MlpSpec::new(2 + 2 * self.latent_width, self.latent_width, self.latent_width, self.depths.up_mp, true)
    }

    fn decoder_spec(&self) -> MlpSpec {
        MlpSpec::new(self.latent_width, self.latent_width, self.field_dim, self.depths.decoder, false)
    }
}

/// One time-slice of the field at the level-1 nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFrame {
    /// Flattened node-major values, `n` components per node.
    pub values: Vec<f64>,
    /// Components per node.
    pub n: usize,
    pub time: f64,
}

impl FieldFrame {
    pub fn new(values: Vec<f64>, n: usize, time: f64) -> Result<Self> {
        if n == 0 || values.len() % n != 0 {
            return Err(Error::Contract(format!(
                "frame with {} values is not divisible into {n}-vectors",
                values.len()
            )));
        }
        Ok(Self { values, n, time })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn as_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n_nodes(), self.n), self.values.clone()).expect("length checked")
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

struct LevelTopo {
    senders: Arc<Vec<usize>>,
    receivers: Arc<Vec<usize>>,
    n_nodes: usize,
    edge_geo: Array2<f64>,
}

struct InterTopo {
    child_to_parent: Arc<Vec<usize>>,
    rel: Array2<f64>,
    neg_rel: Array2<f64>,
    n_parents: usize,
}

/// Tape-ready view of a hierarchy: shared index arrays plus geometric edge
/// attributes as matrices. Build once per hierarchy, reuse across steps.
pub struct ModelTopology {
    levels: Vec<LevelTopo>,
    inter: Vec<InterTopo>,
}

impl ModelTopology {
    pub fn new(h: &GraphHierarchy) -> Result<Self> {
        let levels = h
            .graphs
            .iter()
            .map(|g| {
                let edge_geo = Array2::from_shape_fn((g.n_edges(), 2), |(k, c)| g.edge_attrs[k][c]);
                LevelTopo {
                    senders: Arc::new(g.senders.clone()),
                    receivers: Arc::new(g.receivers.clone()),
                    n_nodes: g.n_nodes(),
                    edge_geo,
                }
            })
            .collect();
        let mut inter = Vec::with_capacity(h.inter.len());
        for (i, link) in h.inter.iter().enumerate() {
            let n_parents = h.graphs[i + 1].n_nodes();
            let mut seen = vec![false; n_parents];
            for &p in &link.child_to_parent {
                if p >= n_parents {
                    return Err(Error::Contract(format!("parent index {p} out of range at level {}", i + 2)));
                }
                seen[p] = true;
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::Contract(format!("childless parent at level {}", i + 2)));
            }
            let rel = Array2::from_shape_fn((link.n_children(), 2), |(k, c)| link.rel_pos[k][c]);
            let neg_rel = rel.mapv(|x| -x);
            inter.push(InterTopo {
                child_to_parent: Arc::new(link.child_to_parent.clone()),
                rel,
                neg_rel,
                n_parents,
            });
        }
        Ok(Self { levels, inter })
    }

    pub fn n_level_nodes(&self, level: usize) -> usize {
        self.levels[level].n_nodes
    }
}

/// One message-passing layer (edge update, mean aggregation per receiver,
/// node update). Returns the updated (node, edge) attributes.
pub fn mp_layer(
    tape: &mut Tape,
    params: &ParamSet,
    base: &str,
    edge_spec: &MlpSpec,
    node_spec: &MlpSpec,
    senders: &Arc<Vec<usize>>,
    receivers: &Arc<Vec<usize>>,
    n_nodes: usize,
    nodes: Var,
    edges: Var,
) -> Result<(Var, Var)> {
    let edge_in = tape.edge_concat(edges, nodes, receivers.clone(), senders.clone());
    let edges2 = mlp_forward(tape, params, &format!("{base}.edge"), edge_spec, edge_in)?;
    let agg = tape.scatter_mean(edges2, receivers.clone(), n_nodes);
    let node_in = tape.concat_cols(&[agg, nodes]);
    let nodes2 = mlp_forward(tape, params, &format!("{base}.node"), node_spec, node_in)?;
    Ok((nodes2, edges2))
}

/// Downward transfer: apply the shared edge function to every child edge
/// `[rel_pos, v_child]` and average per parent.
pub fn down_mp(
    tape: &mut Tape,
    params: &ParamSet,
    base: &str,
    spec: &MlpSpec,
    child_to_parent: &Arc<Vec<usize>>,
    rel: &Array2<f64>,
    n_parents: usize,
    v_child: Var,
) -> Result<Var> {
    let e = tape.constant(rel.clone());
    let cat = tape.concat_cols(&[e, v_child]);
    let msg = mlp_forward(tape, params, base, spec, cat)?;
    Ok(tape.scatter_mean(msg, child_to_parent.clone(), n_parents))
}

/// Upward transfer: update every fine node from `[rel_pos, v_parent, v_fine]`.
/// Each fine node has exactly one parent, so rows stay in fine-node order.
pub fn up_mp(
    tape: &mut Tape,
    params: &ParamSet,
    base: &str,
    spec: &MlpSpec,
    child_to_parent: &Arc<Vec<usize>>,
    neg_rel: &Array2<f64>,
    v_parent: Var,
    v_child: Var,
) -> Result<Var> {
    let e = tape.constant(neg_rel.clone());
    let vp = tape.gather_rows(v_parent, child_to_parent.clone());
    let cat = tape.concat_cols(&[e, vp, v_child]);
    mlp_forward(tape, params, base, spec, cat)
}

/// Options for an autoregressive rollout.
pub struct RolloutConfig<'a> {
    pub steps: usize,
    /// Time-step size used only to stamp frame times.
    pub dt: f64,
    /// Prescribed per-step values at the omega = 1 nodes (in ascending node
    /// order), overwriting predictions after each step. One entry per step,
    /// each of length (number of Dirichlet nodes) x n.
    pub dirichlet: Option<&'a [Vec<f64>]>,
    /// Adaptive coarsening/refinement applied before every step.
    pub adapt: Option<RemeshConfig>,
}

/// Result of a rollout: frames on the primitive node set (adapted
/// predictions are interpolated back), plus the final adapted node set.
pub struct Rollout {
    pub frames: Vec<FieldFrame>,
    pub final_nodes: NodeSet,
    /// Node count per step; constant unless adapting.
    pub node_counts: Vec<usize>,
}

/// The model: configuration plus learnable parameters.
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    /// Deterministically initialize all parameters from a seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = config.scales;
        register_mlp(&mut params, &mut rng, "enc.node", &config.node_encoder_spec())?;
        register_mlp(&mut params, &mut rng, "enc.edge", &config.edge_encoder_spec())?;
        for level in 1..l {
            for j in 0..config.mp_layers[level - 1] {
                register_mlp(&mut params, &mut rng, &format!("mp.d{level}.{j}.edge"), &config.edge_mp_spec())?;
                register_mlp(&mut params, &mut rng, &format!("mp.d{level}.{j}.node"), &config.node_mp_spec())?;
            }
            register_mlp(&mut params, &mut rng, &format!("down.{}", level + 1), &config.down_mp_spec())?;
        }
        for j in 0..config.mp_layers[l - 1] {
            register_mlp(&mut params, &mut rng, &format!("mp.s{l}.{j}.edge"), &config.edge_mp_spec())?;
            register_mlp(&mut params, &mut rng, &format!("mp.s{l}.{j}.node"), &config.node_mp_spec())?;
        }
        for level in (1..l).rev() {
            register_mlp(&mut params, &mut rng, &format!("up.{level}"), &config.up_mp_spec())?;
            for j in 0..config.mp_layers[level - 1] {
                register_mlp(&mut params, &mut rng, &format!("mp.u{level}.{j}.edge"), &config.edge_mp_spec())?;
                register_mlp(&mut params, &mut rng, &format!("mp.u{level}.{j}.node"), &config.node_mp_spec())?;
            }
        }
        register_mlp(&mut params, &mut rng, "dec", &config.decoder_spec())?;
        Ok(Self { config, params })
    }

    /// Build the graph hierarchy this model expects for a node set.
    pub fn build_hierarchy(&self, nodes: &NodeSet, domain: &Domain) -> Result<GraphHierarchy> {
        build_hierarchy(nodes, self.config.scales, &self.config.cell_sizes, self.config.k, domain)
    }

    /// Encode the per-node input `concat(u_i, p_i, omega_i)` (with parameter
    /// scaling) into the level-1 latent node attributes, and the geometric
    /// edge attributes of every level through the shared edge encoder.
    pub fn encode(
        &self,
        tape: &mut Tape,
        topo: &ModelTopology,
        values: &Array2<f64>,
        nodes: &NodeSet,
    ) -> Result<(Var, Vec<Var>)> {
        let n = self.config.field_dim;
        let n_p = self.config.param_dim;
        let n_nodes = nodes.len();
        if values.dim() != (n_nodes, n) {
            return Err(Error::Contract(format!(
                "field values {:?} do not match {} nodes x {} components",
                values.dim(),
                n_nodes,
                n
            )));
        }
        if nodes.n_p != n_p {
            return Err(Error::Contract(format!(
                "node set carries n_p = {} but the model expects {}",
                nodes.n_p, n_p
            )));
        }
        let mut input = Array2::zeros((n_nodes, self.config.node_input_width()));
        for i in 0..n_nodes {
            for c in 0..n {
                input[[i, c]] = values[[i, c]];
            }
            let p = nodes.param(i);
            for c in 0..n_p {
                let scale = self.config.param_scale.get(c).copied().unwrap_or(1.0);
                input[[i, n + c]] = p[c] / scale;
            }
            input[[i, n + n_p]] = nodes.omega[i] as f64;
        }
        let input = tape.constant(input);
        let v = mlp_forward(tape, &self.params, "enc.node", &self.config.node_encoder_spec(), input)?;
        let mut edge_latents = Vec::with_capacity(topo.levels.len());
        for level in &topo.levels {
            let raw = tape.constant(level.edge_geo.clone());
            let e = mlp_forward(tape, &self.params, "enc.edge", &self.config.edge_encoder_spec(), raw)?;
            edge_latents.push(e);
        }
        Ok((v, edge_latents))
    }

    /// One time advance on the tape: encode, V-cycle, decode. Returns the
    /// variable holding the predicted field at t + dt.
    pub fn forward_step(
        &self,
        tape: &mut Tape,
        topo: &ModelTopology,
        values: &Array2<f64>,
        nodes: &NodeSet,
    ) -> Result<Var> {
        let l = self.config.scales;
        if topo.levels.len() != l {
            return Err(Error::Usage(format!(
                "hierarchy has {} levels but the model expects {l}; rebuild it for this node set",
                topo.levels.len()
            )));
        }
        if topo.levels[0].n_nodes != nodes.len() {
            return Err(Error::Usage(format!(
                "hierarchy was built for {} nodes, got {}; rebuild it for this node set",
                topo.levels[0].n_nodes,
                nodes.len()
            )));
        }
        let edge_spec = self.config.edge_mp_spec();
        let node_spec = self.config.node_mp_spec();
        let (mut v_fine, mut edge_latents) = self.encode(tape, topo, values, nodes)?;

        let mut node_latents: Vec<Var> = Vec::with_capacity(l);
        node_latents.push(v_fine);

        // Descending pass with DownMP transfers.
        for level in 1..l {
            let lt = &topo.levels[level - 1];
            let mut v = node_latents[level - 1];
            let mut e = edge_latents[level - 1];
            for j in 0..self.config.mp_layers[level - 1] {
                let (v2, e2) = mp_layer(
                    tape,
                    &self.params,
                    &format!("mp.d{level}.{j}"),
                    &edge_spec,
                    &node_spec,
                    &lt.senders,
                    &lt.receivers,
                    lt.n_nodes,
                    v,
                    e,
                )?;
                v = v2;
                e = e2;
            }
            node_latents[level - 1] = v;
            edge_latents[level - 1] = e;
            let it = &topo.inter[level - 1];
            let v_coarse = down_mp(
                tape,
                &self.params,
                &format!("down.{}", level + 1),
                &self.config.down_mp_spec(),
                &it.child_to_parent,
                &it.rel,
                it.n_parents,
                v,
            )?;
            node_latents.push(v_coarse);
        }

        // Coarsest scale.
        {
            let lt = &topo.levels[l - 1];
            let mut v = node_latents[l - 1];
            let mut e = edge_latents[l - 1];
            for j in 0..self.config.mp_layers[l - 1] {
                let (v2, e2) = mp_layer(
                    tape,
                    &self.params,
                    &format!("mp.s{l}.{j}"),
                    &edge_spec,
                    &node_spec,
                    &lt.senders,
                    &lt.receivers,
                    lt.n_nodes,
                    v,
                    e,
                )?;
                v = v2;
                e = e2;
            }
            node_latents[l - 1] = v;
            edge_latents[l - 1] = e;
        }

        // Ascending pass with UpMP transfers and fresh MP parameters.
        for level in (1..l).rev() {
            let it = &topo.inter[level - 1];
            let mut v = up_mp(
                tape,
                &self.params,
                &format!("up.{level}"),
                &self.config.up_mp_spec(),
                &it.child_to_parent,
                &it.neg_rel,
                node_latents[level],
                node_latents[level - 1],
            )?;
            let lt = &topo.levels[level - 1];
            let mut e = edge_latents[level - 1];
            for j in 0..self.config.mp_layers[level - 1] {
                let (v2, e2) = mp_layer(
                    tape,
                    &self.params,
                    &format!("mp.u{level}.{j}"),
                    &edge_spec,
                    &node_spec,
                    &lt.senders,
                    &lt.receivers,
                    lt.n_nodes,
                    v,
                    e,
                )?;
                v = v2;
                e = e2;
            }
            node_latents[level - 1] = v;
            edge_latents[level - 1] = e;
        }

        v_fine = node_latents[0];
        mlp_forward(tape, &self.params, "dec", &self.config.decoder_spec(), v_fine)
    }

    /// Convenience: run one step on a private tape and return the values.
    pub fn step_values(&self, topo: &ModelTopology, values: &Array2<f64>, nodes: &NodeSet) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let out = self.forward_step(&mut tape, topo, values, nodes)?;
        Ok(tape.value(out).clone())
    }

    /// Autoregressive rollout. Returns steps + 1 frames including the
    /// initial one. With `adapt` set, the node set is coarsened/refined
    /// before every step and predictions are interpolated back to the
    /// primitive node set for the output trajectory.
    pub fn rollout(
        &self,
        nodes: &NodeSet,
        domain: &Domain,
        initial: &FieldFrame,
        cfg: &RolloutConfig,
    ) -> Result<Rollout> {
        if cfg.steps == 0 {
            return Err(Error::InvalidArgument("rollout needs steps >= 1".into()));
        }
        if initial.n != self.config.field_dim || initial.n_nodes() != nodes.len() {
            return Err(Error::Contract(format!(
                "initial frame ({} nodes x {}) does not match node set ({}) and field dim {}",
                initial.n_nodes(),
                initial.n,
                nodes.len(),
                self.config.field_dim
            )));
        }
        let n = self.config.field_dim;
        let periodic = domain.periodic();
        let adapting = cfg.adapt.map_or(false, |a| a.coarsen_fraction > 0.0 || a.refine_fraction > 0.0);

        let mut cur_nodes = nodes.clone();
        let mut cur_values = initial.values.clone();
        let mut hierarchy = self.build_hierarchy(&cur_nodes, domain)?;
        let mut topo = ModelTopology::new(&hierarchy)?;

        let mut frames = Vec::with_capacity(cfg.steps + 1);
        frames.push(initial.clone());
        let mut node_counts = Vec::with_capacity(cfg.steps);

        for step in 1..=cfg.steps {
            if let Some(ref rc) = cfg.adapt {
                if adapting {
                    let (new_nodes, new_values) = remesh::adapt(&cur_nodes, &cur_values, n, rc, &periodic)?;
                    if new_nodes.len() != cur_nodes.len() || new_nodes.positions != cur_nodes.positions {
                        cur_nodes = new_nodes;
                        cur_values = new_values;
                        hierarchy = self.build_hierarchy(&cur_nodes, domain)?;
                        topo = ModelTopology::new(&hierarchy)?;
                    }
                }
            }
            node_counts.push(cur_nodes.len());
            let values = Array2::from_shape_vec((cur_nodes.len(), n), cur_values.clone())
                .map_err(|e| Error::Contract(format!("state shape: {e}")))?;
            let pred = self.step_values(&topo, &values, &cur_nodes)?;
            if pred.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("prediction at rollout step {step}")));
            }
            cur_values = pred.into_raw_vec_and_offset().0;
            if let Some(schedule) = cfg.dirichlet {
                let prescribed = schedule.get(step - 1).ok_or_else(|| {
                    Error::Contract(format!("dirichlet schedule shorter than rollout ({} steps)", cfg.steps))
                })?;
                let omega_idx: Vec<usize> = (0..cur_nodes.len()).filter(|&i| cur_nodes.omega[i] == 1).collect();
                if prescribed.len() != omega_idx.len() * n {
                    return Err(Error::Contract(format!(
                        "dirichlet values for step {step} have length {}, expected {}",
                        prescribed.len(),
                        omega_idx.len() * n
                    )));
                }
                for (j, &node) in omega_idx.iter().enumerate() {
                    cur_values[node * n..(node + 1) * n].copy_from_slice(&prescribed[j * n..(j + 1) * n]);
                }
            }
            let time = initial.time + step as f64 * cfg.dt;
            if adapting {
                let on_primitive = remesh::interpolate_idw(
                    &cur_nodes,
                    &cur_values,
                    n,
                    &nodes.positions,
                    cfg.adapt.as_ref().unwrap().k,
                    &periodic,
                )?;
                frames.push(FieldFrame::new(on_primitive, n, time)?);
            } else {
                frames.push(FieldFrame::new(cur_values.clone(), n, time)?);
            }
        }
        Ok(Rollout { frames, final_nodes: cur_nodes, node_counts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_nodes, PeriodicSpec};
    use crate::neural::Tape;
    use ndarray::arr2;

    fn tiny_config(scales: usize) -> ModelConfig {
        ModelConfig {
            scales,
            mp_layers: vec![1; scales],
            k: 3,
            cell_sizes: (0..scales - 1).map(|i| (0.25 * (i + 1) as f64, 0.25 * (i + 1) as f64)).collect(),
            latent_width: 8,
            field_dim: 1,
            param_dim: 2,
            param_scale: Vec::new(),
            depths: MlpDepths::default(),
            lambda_d: 0.25,
            lambda_e: 0.5,
        }
    }

    #[test]
    fn node_input_widths_match_problem_setups() {
        let adv = ModelConfig::advection_defaults();
        assert_eq!(adv.node_input_width(), 4); // u (1) + velocity (2) + omega
        let flow = ModelConfig::flow_defaults();
        assert_eq!(flow.node_input_width(), 5); // u,v,p (3) + Re (1) + omega
    }

    #[test]
    fn encode_is_pure_in_node_features() {
        let config = tiny_config(1);
        let model = Model::new(config, 7).unwrap();
        let domain = Domain::unit_periodic();
        let mut nodes = random_nodes(&domain, 12, 2, 3);
        // Make nodes 2 and 5 identical in (u, p, omega).
        for c in 0..2 {
            let v = nodes.param(2)[c];
            nodes.params[5 * 2 + c] = v;
        }
        let h = model.build_hierarchy(&nodes, &domain).unwrap();
        let topo = ModelTopology::new(&h).unwrap();
        let mut values = Array2::zeros((12, 1));
        values[[2, 0]] = 0.4;
        values[[5, 0]] = 0.4;
        let mut tape = Tape::new();
        let (v, _) = model.encode(&mut tape, &topo, &values, &nodes).unwrap();
        let latents = tape.value(v);
        for c in 0..8 {
            assert!(
                (latents[[2, c]] - latents[[5, c]]).abs() < 1e-14,
                "identical inputs must encode identically"
            );
        }
    }

    /// f^e == 0 and f^v = projection onto its node argument leaves node
    /// attributes unchanged through an MP layer.
    #[test]
    fn mp_layer_identity_fixed_point() {
        let w = 3usize;
        let mut params = ParamSet::new();
        // Edge MLP: single layer, all zeros -> e' = 0.
        params.register("t.edge.w0", vec![3 * w, w], vec![0.0; 3 * w * w]).unwrap();
        params.register("t.edge.b0", vec![w], vec![0.0; w]).unwrap();
        // Node MLP: single layer projecting [agg, v] onto v.
        let mut proj = vec![0.0; 2 * w * w];
        for i in 0..w {
            proj[(w + i) * w + i] = 1.0;
        }
        params.register("t.node.w0", vec![2 * w, w], proj).unwrap();
        params.register("t.node.b0", vec![w], vec![0.0; w]).unwrap();
        let edge_spec = MlpSpec::new(3 * w, w, w, 1, false);
        let node_spec = MlpSpec::new(2 * w, w, w, 1, false);

        let mut tape = Tape::new();
        let v = tape.constant(arr2(&[[1.0, -2.0, 0.5], [0.0, 3.0, 1.0], [2.0, 2.0, 2.0]]));
        let e = tape.constant(arr2(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]));
        let senders = Arc::new(vec![0usize, 2]);
        let receivers = Arc::new(vec![1usize, 1]);
        let (v2, e2) = mp_layer(&mut tape, &params, "t", &edge_spec, &node_spec, &senders, &receivers, 3, v, e).unwrap();
        assert_eq!(tape.value(v2), tape.value(v));
        assert!(tape.value(e2).iter().all(|&x| x == 0.0));
    }

    /// Identity edge update extracting e and zero node update: the mean of
    /// two incoming edge vectors lands in the aggregation slot.
    #[test]
    fn mp_layer_mean_of_two_messages() {
        let w = 2usize;
        let mut params = ParamSet::new();
        // Edge MLP projects [e, v_r, v_s] onto e.
        let mut proj = vec![0.0; 3 * w * w];
        for i in 0..w {
            proj[i * w + i] = 1.0;
        }
        params.register("t.edge.w0", vec![3 * w, w], proj).unwrap();
        params.register("t.edge.b0", vec![w], vec![0.0; w]).unwrap();
        // Node MLP projects [agg, v] onto agg.
        let mut proj = vec![0.0; 2 * w * w];
        for i in 0..w {
            proj[i * w + i] = 1.0;
        }
        params.register("t.node.w0", vec![2 * w, w], proj).unwrap();
        params.register("t.node.b0", vec![w], vec![0.0; w]).unwrap();
        let edge_spec = MlpSpec::new(3 * w, w, w, 1, false);
        let node_spec = MlpSpec::new(2 * w, w, w, 1, false);

        let mut tape = Tape::new();
        let v = tape.constant(Array2::zeros((2, w)));
        let a = [1.0, 5.0];
        let b = [3.0, -1.0];
        let e = tape.constant(arr2(&[a, b]));
        let senders = Arc::new(vec![0usize, 0]);
        let receivers = Arc::new(vec![1usize, 1]);
        let (v2, _) = mp_layer(&mut tape, &params, "t", &edge_spec, &node_spec, &senders, &receivers, 2, v, e).unwrap();
        let got = tape.value(v2);
        assert_eq!(got.row(1).to_vec(), vec![2.0, 2.0]);
        // Receiver 0 has no incoming edges: aggregation is the zero vector.
        assert_eq!(got.row(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn down_mp_singleton_and_pair_means() {
        let w = 2usize;
        let mut params = ParamSet::new();
        // Transfer MLP projects [rel, v_child] onto v_child.
        let mut proj = vec![0.0; (2 + w) * w];
        for i in 0..w {
            proj[(2 + i) * w + i] = 1.0;
        }
        params.register("d.w0", vec![2 + w, w], proj).unwrap();
        params.register("d.b0", vec![w], vec![0.0; w]).unwrap();
        let spec = MlpSpec::new(2 + w, w, w, 1, false);
        let mut tape = Tape::new();
        let v_child = tape.constant(arr2(&[[2.0, 4.0], [6.0, 0.0], [1.0, 1.0]]));
        let c2p = Arc::new(vec![0usize, 0, 1]);
        let rel = Array2::zeros((3, 2));
        let out = down_mp(&mut tape, &params, "d", &spec, &c2p, &rel, 2, v_child).unwrap();
        let got = tape.value(out);
        assert_eq!(got.row(0).to_vec(), vec![4.0, 2.0]); // two children averaged
        assert_eq!(got.row(1).to_vec(), vec![1.0, 1.0]); // singleton child copied
    }

    #[test]
    fn up_mp_projections_broadcast_or_keep() {
        let w = 2usize;
        let spec = MlpSpec::new(2 + 2 * w, w, w, 1, false);
        let make_proj = |offset: usize| {
            let mut proj = vec![0.0; (2 + 2 * w) * w];
            for i in 0..w {
                proj[(offset + i) * w + i] = 1.0;
            }
            proj
        };
        let c2p = Arc::new(vec![0usize, 1, 1]);
        let neg_rel = Array2::zeros((3, 2));
        let parents = arr2(&[[10.0, 20.0], [30.0, 40.0]]);
        let children = arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);

        // Projection onto the fine-node slot leaves children unchanged.
        let mut params = ParamSet::new();
        params.register("u.w0", vec![2 + 2 * w, w], make_proj(2 + w)).unwrap();
        params.register("u.b0", vec![w], vec![0.0; w]).unwrap();
        let mut tape = Tape::new();
        let vp = tape.constant(parents.clone());
        let vc = tape.constant(children.clone());
        let out = up_mp(&mut tape, &params, "u", &spec, &c2p, &neg_rel, vp, vc).unwrap();
        assert_eq!(tape.value(out), &children);

        // Projection onto the coarse slot broadcasts each parent.
        let mut params = ParamSet::new();
        params.register("u.w0", vec![2 + 2 * w, w], make_proj(2)).unwrap();
        params.register("u.b0", vec![w], vec![0.0; w]).unwrap();
        let mut tape = Tape::new();
        let vp = tape.constant(parents);
        let vc = tape.constant(children);
        let out = up_mp(&mut tape, &params, "u", &spec, &c2p, &neg_rel, vp, vc).unwrap();
        let got = tape.value(out);
        assert_eq!(got.row(0).to_vec(), vec![10.0, 20.0]);
        assert_eq!(got.row(1).to_vec(), vec![30.0, 40.0]);
        assert_eq!(got.row(2).to_vec(), vec![30.0, 40.0]);
    }

    #[test]
    fn single_scale_forward_runs_and_rollout_counts_frames() {
        let config = tiny_config(1);
        let model = Model::new(config, 3).unwrap();
        let domain = Domain::unit_periodic();
        let nodes = random_nodes(&domain, 15, 2, 5);
        let initial = FieldFrame::new(vec![0.1; 15], 1, 0.0).unwrap();
        let roll = model
            .rollout(&nodes, &domain, &initial, &RolloutConfig { steps: 3, dt: 0.03, dirichlet: None, adapt: None })
            .unwrap();
        assert_eq!(roll.frames.len(), 4);
        assert_eq!(roll.frames[0], initial);
        assert_eq!(roll.final_nodes, nodes);
        // steps = 1 equals one forward_step
        let h = model.build_hierarchy(&nodes, &domain).unwrap();
        let topo = ModelTopology::new(&h).unwrap();
        let one = model.step_values(&topo, &initial.as_matrix(), &nodes).unwrap();
        let roll1 = model
            .rollout(&nodes, &domain, &initial, &RolloutConfig { steps: 1, dt: 0.03, dirichlet: None, adapt: None })
            .unwrap();
        let got = roll1.frames[1].as_matrix();
        assert_eq!(one, got);
    }

    #[test]
    fn mismatched_hierarchy_is_usage_error() {
        let config = tiny_config(2);
        let model = Model::new(config, 3).unwrap();
        let domain = Domain::unit_periodic();
        let nodes = random_nodes(&domain, 20, 2, 5);
        let other = random_nodes(&domain, 25, 2, 6);
        let h = model.build_hierarchy(&other, &domain).unwrap();
        let topo = ModelTopology::new(&h).unwrap();
        let values = Array2::zeros((20, 1));
        assert!(matches!(
            model.forward_step(&mut Tape::new(), &topo, &values, &nodes),
            Err(Error::Usage(_))
        ));
    }

    /// Closed-form parameter-count audit for the three-scale advection
    /// configuration: every layer's weights and biases summed by hand.
    #[test]
    fn parameter_count_matches_arithmetic() {
        let config = ModelConfig::advection_defaults();
        let model = Model::new(config.clone(), 0).unwrap();
        let w = config.latent_width;
        let dense = |i: usize, o: usize| i * o + o;
        let two_layer = |i: usize, o: usize| dense(i, w) + dense(w, o);
        let node_enc = two_layer(4, w);
        let edge_enc = two_layer(2, w);
        let mp = two_layer(3 * w, w) + two_layer(2 * w, w);
        // L = 3, M = (2, 2, 4): descending blocks 2 + 2, coarsest 4,
        // ascending blocks 2 + 2 -> 12 MP layers; 2 DownMP + 2 UpMP.
        let n_mp = 12;
        let down = two_layer(2 + w, w) * 2;
        let up = two_layer(2 + 2 * w, w) * 2;
        let dec = two_layer(w, 1);
        let expected = node_enc + edge_enc + n_mp * mp + down + up + dec;
        assert_eq!(model.params.n_scalars(), expected);
    }

    #[test]
    fn dirichlet_overwrite_applies_after_each_step() {
        let mut config = tiny_config(1);
        config.param_dim = 0;
        let model = Model::new(config, 1).unwrap();
        let domain = Domain::inflow_channel(1.0, 0.5);
        let mut nodes = crate::geometry::sample_nodes(&domain, 0.1, 2).unwrap();
        nodes.n_p = 0;
        nodes.params.clear();
        let n_omega = nodes.omega.iter().filter(|&&o| o == 1).count();
        assert!(n_omega > 0);
        let initial = FieldFrame::new(vec![0.0; nodes.len()], 1, 0.0).unwrap();
        let schedule: Vec<Vec<f64>> = (0..2).map(|s| vec![s as f64 + 1.0; n_omega]).collect();
        let roll = model
            .rollout(
                &nodes,
                &domain,
                &initial,
                &RolloutConfig { steps: 2, dt: 0.03, dirichlet: Some(&schedule), adapt: None },
            )
            .unwrap();
        let omega_idx: Vec<usize> = (0..nodes.len()).filter(|&i| nodes.omega[i] == 1).collect();
        for (step, frame) in roll.frames.iter().enumerate().skip(1) {
            for &i in &omega_idx {
                assert_eq!(frame.values[i], step as f64, "step {step} node {i}");
            }
        }
        let _ = PeriodicSpec::none();
    }
}
