//! Node-set representation, periodic coordinate embedding, k-NN edge
//! construction and quasi-uniform node sampling.
//!
//! Periodic directions are handled by mapping each periodic coordinate onto a
//! circle of radius P/(2π), so that arc length locally matches the original
//! distance and mixed periodic/non-periodic axes stay metrically comparable.
//! Edge attributes are relative positions in the original coordinates with
//! minimal-image wrapping along periodic directions.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic bytes of the node-set binary record.
pub const NODE_SET_MAGIC: &[u8; 4] = b"MSGN";
/// Current node-set format version.
pub const NODE_SET_VERSION: u32 = 1;

/// Periodicity of the domain: a present entry is the period P along that axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PeriodicSpec {
    pub period_x: Option<f64>,
    pub period_y: Option<f64>,
}

impl PeriodicSpec {
    pub fn none() -> Self {
        Self { period_x: None, period_y: None }
    }

    pub fn x(p: f64) -> Self {
        Self { period_x: Some(p), period_y: None }
    }

    pub fn y(p: f64) -> Self {
        Self { period_x: None, period_y: Some(p) }
    }

    pub fn xy(px: f64, py: f64) -> Self {
        Self { period_x: Some(px), period_y: Some(py) }
    }

    pub fn period(&self, axis: usize) -> Option<f64> {
        match axis {
            0 => self.period_x,
            _ => self.period_y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, p) in [self.period_x, self.period_y].into_iter().enumerate() {
            if let Some(p) = p {
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "period along axis {axis} must be finite and > 0, got {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of embedded coordinate components (2 per periodic axis, 1 otherwise).
    pub fn embedded_dim(&self) -> usize {
        2 + self.period_x.is_some() as usize + self.period_y.is_some() as usize
    }
}

/// Kind of boundary condition applied to one side of a rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    /// Side identified with the opposite side; no boundary nodes are placed.
    Periodic,
    /// Prescribed field values; nodes get omega = 1 and are frozen.
    Dirichlet,
    /// Zero-gradient outflow; nodes get omega = 0 and are frozen.
    Neumann,
}

/// Axis-aligned rectangular domain with per-side boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl Domain {
    /// Rectangle with all four sides periodic. The minimum corner is pinned
    /// to the origin so periodic coordinates live in [0, P).
    pub fn periodic_box(width: f64, height: f64) -> Self {
        Self {
            min: [0.0, 0.0],
            max: [width, height],
            left: BoundaryKind::Periodic,
            right: BoundaryKind::Periodic,
            bottom: BoundaryKind::Periodic,
            top: BoundaryKind::Periodic,
        }
    }

    /// The unit square with full periodicity.
    pub fn unit_periodic() -> Self {
        Self::periodic_box(1.0, 1.0)
    }

    /// Inflow channel: Dirichlet on the left, Neumann on the right,
    /// periodic in y.
    pub fn inflow_channel(width: f64, height: f64) -> Self {
        Self {
            min: [0.0, 0.0],
            max: [width, height],
            left: BoundaryKind::Dirichlet,
            right: BoundaryKind::Neumann,
            bottom: BoundaryKind::Periodic,
            top: BoundaryKind::Periodic,
        }
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    /// Periodicity derived from the side kinds. Both sides of an axis must
    /// agree on being periodic.
    pub fn periodic(&self) -> PeriodicSpec {
        let ext = self.extent();
        PeriodicSpec {
            period_x: (self.left == BoundaryKind::Periodic).then_some(ext[0]),
            period_y: (self.bottom == BoundaryKind::Periodic).then_some(ext[1]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ext = self.extent();
        if !(ext[0].is_finite() && ext[1].is_finite() && ext[0] > 0.0 && ext[1] > 0.0) {
            return Err(Error::Config(format!(
                "degenerate domain: extent {ext:?} must be positive and finite"
            )));
        }
        if (self.left == BoundaryKind::Periodic) != (self.right == BoundaryKind::Periodic) {
            return Err(Error::Config("left/right must both be periodic or neither".into()));
        }
        if (self.bottom == BoundaryKind::Periodic) != (self.top == BoundaryKind::Periodic) {
            return Err(Error::Config("bottom/top must both be periodic or neither".into()));
        }
        if self.left == BoundaryKind::Periodic && self.min[0] != 0.0 {
            return Err(Error::Config("periodic x axis requires min.x = 0".into()));
        }
        if self.bottom == BoundaryKind::Periodic && self.min[1] != 0.0 {
            return Err(Error::Config("periodic y axis requires min.y = 0".into()));
        }
        Ok(())
    }
}

/// Discretised domain: node positions plus per-node boundary metadata and
/// physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    /// Node coordinates. Periodic coordinates lie in [0, P).
    pub positions: Vec<[f64; 2]>,
    /// Dirichlet indicator: 1 exactly on Dirichlet-boundary nodes.
    pub omega: Vec<u8>,
    /// Nodes excluded from remeshing (all boundary nodes).
    pub frozen: Vec<bool>,
    /// Flattened per-node physical parameters, `n_p` values per node.
    pub params: Vec<f64>,
    /// Number of physical parameters per node.
    pub n_p: usize,
}

impl NodeSet {
    pub fn new(positions: Vec<[f64; 2]>, omega: Vec<u8>, frozen: Vec<bool>, params: Vec<f64>, n_p: usize) -> Result<Self> {
        let set = Self { positions, omega, frozen, params, n_p };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn param(&self, i: usize) -> &[f64] {
        &self.params[i * self.n_p..(i + 1) * self.n_p]
    }

    /// Indices of nodes with omega = 1, in ascending order.
    pub fn dirichlet_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.omega[i] == 1).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::InvalidArgument("node set must contain at least one node".into()));
        }
        if self.omega.len() != n || self.frozen.len() != n || self.params.len() != n * self.n_p {
            return Err(Error::Contract(format!(
                "node-set arrays disagree on length: |V|={n}, omega={}, frozen={}, params={} (n_p={})",
                self.omega.len(),
                self.frozen.len(),
                self.params.len(),
                self.n_p
            )));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::NonFinite(format!("position of node {i}")));
            }
        }
        if self.omega.iter().any(|&o| o > 1) {
            return Err(Error::Contract("omega entries must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// Directed edges with relative-position attributes (sender -> receiver,
/// minimal image along periodic directions).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    pub rel_pos: Vec<[f64; 2]>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }
}

/// Map a scalar coordinate with period `p` onto the unit circle.
pub fn embed_periodic(x: f64, p: f64) -> Result<[f64; 2]> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("coordinate must be finite, got {x}")));
    }
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::InvalidArgument(format!("period must be finite and > 0, got {p}")));
    }
    let angle = 2.0 * std::f64::consts::PI * x / p;
    Ok([angle.cos(), angle.sin()])
}

/// Wrap a displacement along a periodic axis into the minimal image
/// (-P/2, P/2], choosing +P/2 on ties.
pub fn minimal_image(d: f64, p: f64) -> f64 {
    let mut w = d.rem_euclid(p);
    if w > 0.5 * p {
        w -= p;
    }
    w
}

/// Relative position receiver - sender with minimal-image wrapping along
/// periodic directions; exact componentwise difference otherwise.
pub fn relative_position(sender: [f64; 2], receiver: [f64; 2], periodic: &PeriodicSpec) -> [f64; 2] {
    let mut rel = [receiver[0] - sender[0], receiver[1] - sender[1]];
    for axis in 0..2 {
        if let Some(p) = periodic.period(axis) {
            rel[axis] = minimal_image(rel[axis], p);
        }
    }
    rel
}

/// Coordinates used by the k-NN search: periodic axes contribute two
/// components on a circle of radius P/(2π); other axes pass through.
///
/// Returns the flattened row-major array and the embedded dimensionality.
pub fn embedded_coords(nodes: &NodeSet, periodic: &PeriodicSpec) -> Result<(Vec<f64>, usize)> {
    periodic.validate()?;
    let dim = periodic.embedded_dim();
    let mut out = Vec::with_capacity(nodes.len() * dim);
    for pos in &nodes.positions {
        for axis in 0..2 {
            match periodic.period(axis) {
                Some(p) => {
                    let radius = p / (2.0 * std::f64::consts::PI);
                    let circ = embed_periodic(pos[axis], p)?;
                    out.push(radius * circ[0]);
                    out.push(radius * circ[1]);
                }
                None => out.push(pos[axis]),
            }
        }
    }
    Ok((out, dim))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Connect every node (receiver) to its k nearest other nodes (senders) by
/// Euclidean distance in embedded coordinates. Ties break toward the lower
/// sender index. Edges are emitted receiver-major, nearest sender first.
pub fn knn_edges(nodes: &NodeSet, k: usize, periodic: &PeriodicSpec) -> Result<EdgeSet> {
    nodes.validate()?;
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if nodes.len() <= k {
        return Err(Error::Config(format!(
            "k-NN needs |V| > k, got |V| = {} and k = {k}",
            nodes.len()
        )));
    }
    let (coords, dim) = embedded_coords(nodes, periodic)?;
    let n = nodes.len();

    // Per receiver keep the k best (distance², sender) pairs in a sorted
    // scratch buffer; k is small so insertion is cheap.
    let nearest: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let rc = &coords[r * dim..(r + 1) * dim];
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for s in 0..n {
                if s == r {
                    continue;
                }
                let d2 = squared_distance(rc, &coords[s * dim..(s + 1) * dim]);
                if best.len() == k {
                    let worst = best[k - 1];
                    if d2 > worst.0 || (d2 == worst.0 && s > worst.1) {
                        continue;
                    }
                }
                let key = (d2, s);
                let at = best.partition_point(|&(bd, bs)| (bd, bs) < key);
                best.insert(at, key);
                if best.len() > k {
                    best.pop();
                }
            }
            best.into_iter().map(|(_, s)| s).collect()
        })
        .collect();

    let mut senders = Vec::with_capacity(n * k);
    let mut receivers = Vec::with_capacity(n * k);
    let mut rel_pos = Vec::with_capacity(n * k);
    for (r, row) in nearest.iter().enumerate() {
        for &s in row {
            senders.push(s);
            receivers.push(r);
            rel_pos.push(relative_position(nodes.positions[s], nodes.positions[r], periodic));
        }
    }
    Ok(EdgeSet { senders, receivers, rel_pos })
}

/// Optional local densification of the sampler around a focus point:
/// cells within `inner_radius` of `center` are subdivided so local spacing
/// approaches `inner_factor * target_spacing`, relaxing back to the base
/// spacing at `outer_radius`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DensityRamp {
    pub center: [f64; 2],
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Spacing multiplier at the center, in (0, 1].
    pub inner_factor: f64,
}

impl DensityRamp {
    fn factor(&self, pos: [f64; 2]) -> f64 {
        let d = ((pos[0] - self.center[0]).powi(2) + (pos[1] - self.center[1]).powi(2)).sqrt();
        if d <= self.inner_radius {
            self.inner_factor
        } else if d >= self.outer_radius {
            1.0
        } else {
            let t = (d - self.inner_radius) / (self.outer_radius - self.inner_radius);
            self.inner_factor + (1.0 - self.inner_factor) * t
        }
    }
}

/// Quasi-uniform jittered-grid sampling of a domain.
///
/// Interior nodes sit at jittered cell centers of a regular grid whose pitch
/// matches `target_spacing`. Non-periodic sides additionally receive a row of
/// boundary nodes: Dirichlet sides are flagged omega = 1, and every boundary
/// node is frozen. Deterministic for a fixed seed.
pub fn sample_nodes(domain: &Domain, target_spacing: f64, jitter_seed: u64) -> Result<NodeSet> {
    sample_nodes_with_density(domain, target_spacing, jitter_seed, None)
}

/// `sample_nodes` with an optional radial density ramp.
pub fn sample_nodes_with_density(
    domain: &Domain,
    target_spacing: f64,
    jitter_seed: u64,
    density: Option<&DensityRamp>,
) -> Result<NodeSet> {
    domain.validate()?;
    let ext = domain.extent();
    if !(target_spacing > 0.0) || target_spacing >= ext[0].min(ext[1]) {
        return Err(Error::Config(format!(
            "target spacing {target_spacing} must be positive and smaller than the shortest side {}",
            ext[0].min(ext[1])
        )));
    }
    let periodic = domain.periodic();
    let nx = (ext[0] / target_spacing).round().max(1.0) as usize;
    let ny = (ext[1] / target_spacing).round().max(1.0) as usize;
    let hx = ext[0] / nx as f64;
    let hy = ext[1] / ny as f64;
    // Keeps the mean nearest-neighbour distance within a quarter of the
    // target pitch while still breaking the grid structure.
    const JITTER: f64 = 0.2;

    let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    let mut positions = Vec::new();
    let mut omega = Vec::new();
    let mut frozen = Vec::new();

    fn push_interior(pos: [f64; 2], positions: &mut Vec<[f64; 2]>, omega: &mut Vec<u8>, frozen: &mut Vec<bool>) {
        positions.push(pos);
        omega.push(0);
        frozen.push(false);
    }

    for iy in 0..ny {
        for ix in 0..nx {
            let jx: f64 = rng.gen_range(-JITTER..JITTER);
            let jy: f64 = rng.gen_range(-JITTER..JITTER);
            let cell_pos = [
                domain.min[0] + (ix as f64 + 0.5 + jx) * hx,
                domain.min[1] + (iy as f64 + 0.5 + jy) * hy,
            ];
            let factor = density.map_or(1.0, |d| d.factor(cell_pos));
            if factor >= 0.999 {
                let mut pos = cell_pos;
                wrap_into_domain(&mut pos, domain, &periodic);
                push_interior(pos, &mut positions, &mut omega, &mut frozen);
            } else {
                // Subdivide the cell so that local spacing ~ factor * target.
                let s = (1.0 / factor).round().max(2.0) as usize;
                for sy in 0..s {
                    for sx in 0..s {
                        let jx: f64 = rng.gen_range(-JITTER..JITTER);
                        let jy: f64 = rng.gen_range(-JITTER..JITTER);
                        let mut pos = [
                            domain.min[0] + (ix as f64 + (sx as f64 + 0.5 + jx) / s as f64) * hx,
                            domain.min[1] + (iy as f64 + (sy as f64 + 0.5 + jy) / s as f64) * hy,
                        ];
                        wrap_into_domain(&mut pos, domain, &periodic);
                        push_interior(pos, &mut positions, &mut omega, &mut frozen);
                    }
                }
            }
        }
    }

    // Boundary nodes along non-periodic sides. Corners belong to the x-sides.
    fn push_boundary(pos: [f64; 2], dirichlet: bool, positions: &mut Vec<[f64; 2]>, omega: &mut Vec<u8>, frozen: &mut Vec<bool>) {
        positions.push(pos);
        omega.push(dirichlet as u8);
        frozen.push(true);
    }

    let y_periodic = periodic.period_y.is_some();
    let x_periodic = periodic.period_x.is_some();
    for (side, x) in [(domain.left, domain.min[0]), (domain.right, domain.max[0])] {
        if side == BoundaryKind::Periodic {
            continue;
        }
        let dirichlet = side == BoundaryKind::Dirichlet;
        if y_periodic {
            for j in 0..ny {
                push_boundary([x, domain.min[1] + j as f64 * hy], dirichlet, &mut positions, &mut omega, &mut frozen);
            }
        } else {
            for j in 0..=ny {
                push_boundary([x, domain.min[1] + j as f64 * hy], dirichlet, &mut positions, &mut omega, &mut frozen);
            }
        }
    }
    for (side, y) in [(domain.bottom, domain.min[1]), (domain.top, domain.max[1])] {
        if side == BoundaryKind::Periodic {
            continue;
        }
        let dirichlet = side == BoundaryKind::Dirichlet;
        if x_periodic {
            for j in 0..nx {
                push_boundary([domain.min[0] + j as f64 * hx, y], dirichlet, &mut positions, &mut omega, &mut frozen);
            }
        } else {
            // Corners already owned by the left/right sides when those are
            // non-periodic; skip the endpoints in that case.
            let skip_ends = domain.left != BoundaryKind::Periodic;
            let range: Box<dyn Iterator<Item = usize>> =
                if skip_ends { Box::new(1..nx) } else { Box::new(0..=nx) };
            for j in range {
                push_boundary([domain.min[0] + j as f64 * hx, y], dirichlet, &mut positions, &mut omega, &mut frozen);
            }
        }
    }

    let n = positions.len();
    NodeSet::new(positions, omega, frozen, Vec::new(), 0).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }).and_then(|set| {
        if n == 0 {
            Err(Error::Config("sampler produced no nodes".into()))
        } else {
            Ok(set)
        }
    })
}

fn wrap_into_domain(pos: &mut [f64; 2], domain: &Domain, periodic: &PeriodicSpec) {
    for axis in 0..2 {
        match periodic.period(axis) {
            Some(p) => pos[axis] = pos[axis].rem_euclid(p),
            None => pos[axis] = pos[axis].clamp(domain.min[axis], domain.max[axis]),
        }
    }
}

fn read_exact_checked<R: Read>(r: &mut R, buf: &mut [u8], path: &str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::format(path, format!("truncated while reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_checked(r, &mut b, path, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_checked(r, &mut b, path, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64_vec<R: Read>(r: &mut R, count: usize, path: &str, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact_checked(r, &mut bytes, path, what)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Write a node set in the little-endian binary record layout:
/// magic "MSGN", version u32, |V| u64, n_p u32, positions (f64 x2 per node),
/// omega (u8 per node), frozen (u8 per node), params (f64 x n_p per node).
pub fn write_node_set<W: Write>(w: &mut W, nodes: &NodeSet) -> Result<()> {
    nodes.validate()?;
    let path = "<node set>";
    let io = |e| Error::io(path, e);
    w.write_all(NODE_SET_MAGIC).map_err(io)?;
    w.write_all(&NODE_SET_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(nodes.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(nodes.n_p as u32).to_le_bytes()).map_err(io)?;
    for p in &nodes.positions {
        w.write_all(&p[0].to_le_bytes()).map_err(io)?;
        w.write_all(&p[1].to_le_bytes()).map_err(io)?;
    }
    w.write_all(&nodes.omega).map_err(io)?;
    let frozen_bytes: Vec<u8> = nodes.frozen.iter().map(|&f| f as u8).collect();
    w.write_all(&frozen_bytes).map_err(io)?;
    for v in &nodes.params {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Read a node set written by [`write_node_set`]. `path` is used in error
/// messages only.
pub fn read_node_set<R: Read>(r: &mut R, path: &str) -> Result<NodeSet> {
    let mut magic = [0u8; 4];
    read_exact_checked(r, &mut magic, path, "magic")?;
    if &magic != NODE_SET_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected MSGN")));
    }
    let version = read_u32(r, path, "version")?;
    if version != NODE_SET_VERSION {
        return Err(Error::format(path, format!("unsupported node-set version {version}")));
    }
    let n = read_u64(r, path, "node count")? as usize;
    let n_p = read_u32(r, path, "n_p")? as usize;
    if n == 0 || n > (1 << 32) || n_p > (1 << 16) {
        return Err(Error::format(path, format!("implausible sizes |V|={n}, n_p={n_p}")));
    }
    let pos_flat = read_f64_vec(r, n * 2, path, "positions")?;
    let positions: Vec<[f64; 2]> = pos_flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let mut omega = vec![0u8; n];
    read_exact_checked(r, &mut omega, path, "omega")?;
    let mut frozen_bytes = vec![0u8; n];
    read_exact_checked(r, &mut frozen_bytes, path, "frozen")?;
    if frozen_bytes.iter().any(|&b| b > 1) || omega.iter().any(|&b| b > 1) {
        return Err(Error::format(path, "omega/frozen flags must be 0 or 1"));
    }
    let frozen: Vec<bool> = frozen_bytes.into_iter().map(|b| b != 0).collect();
    let params = read_f64_vec(r, n * n_p, path, "params")?;
    NodeSet::new(positions, omega, frozen, params, n_p)
        .map_err(|e| Error::format(path, format!("invalid node set: {e}")))
}

/// Relabel a node set with `perm`, where `perm[new_index] = old_index`.
/// Used by permutation-consistency tests and the remesher.
pub fn permute_nodes(nodes: &NodeSet, perm: &[usize]) -> NodeSet {
    let mut params = Vec::with_capacity(nodes.params.len());
    for &old in perm {
        params.extend_from_slice(nodes.param(old));
    }
    NodeSet {
        positions: perm.iter().map(|&o| nodes.positions[o]).collect(),
        omega: perm.iter().map(|&o| nodes.omega[o]).collect(),
        frozen: perm.iter().map(|&o| nodes.frozen[o]).collect(),
        params,
        n_p: nodes.n_p,
    }
}

/// Brute-force k-NN oracle: full all-pairs sort in embedded coordinates with
/// the (distance, sender-index) tie-break. Exposed for tests and acceptance
/// checks; kept independent of the selection logic in [`knn_edges`].
pub fn knn_oracle(nodes: &NodeSet, k: usize, periodic: &PeriodicSpec) -> Result<EdgeSet> {
    let (coords, dim) = embedded_coords(nodes, periodic)?;
    let n = nodes.len();
    if n <= k {
        return Err(Error::Config("oracle needs |V| > k".into()));
    }
    let mut senders = Vec::new();
    let mut receivers = Vec::new();
    let mut rel_pos = Vec::new();
    for r in 0..n {
        let rc = &coords[r * dim..(r + 1) * dim];
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&s| s != r)
            .map(|s| {
                let sc = &coords[s * dim..(s + 1) * dim];
                let mut acc = 0.0;
                for (a, b) in rc.iter().zip(sc) {
                    let d = a - b;
                    acc += d * d;
                }
                (acc, s)
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, s) in all.iter().take(k) {
            senders.push(s);
            receivers.push(r);
            rel_pos.push(relative_position(nodes.positions[s], nodes.positions[r], periodic));
        }
    }
    Ok(EdgeSet { senders, receivers, rel_pos })
}

/// Convenience for tests: random interior node set over a domain.
pub fn random_nodes(domain: &Domain, n: usize, n_p: usize, seed: u64) -> NodeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext = domain.extent();
    let positions = (0..n)
        .map(|_| {
            [
                domain.min[0] + rng.gen::<f64>() * ext[0],
                domain.min[1] + rng.gen::<f64>() * ext[1],
            ]
        })
        .collect();
    let params = (0..n * n_p).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    NodeSet {
        positions,
        omega: vec![0; n],
        frozen: vec![false; n],
        params,
        n_p,
    }
}

/// Mean nearest-neighbour distance in embedded coordinates; diagnostic for
/// the sampler.
pub fn mean_nn_spacing(nodes: &NodeSet, periodic: &PeriodicSpec) -> Result<f64> {
    let (coords, dim) = embedded_coords(nodes, periodic)?;
    let n = nodes.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let ic = &coords[i * dim..(i + 1) * dim];
            let mut best = f64::INFINITY;
            for j in 0..n {
                if j != i {
                    let d2 = squared_distance(ic, &coords[j * dim..(j + 1) * dim]);
                    if d2 < best {
                        best = d2;
                    }
                }
            }
            best.sqrt()
        })
        .sum();
    Ok(total / n as f64)
}
