//! Adaptive coarsening/refinement of the level-1 node set: gradient scoring
//! over a k-NN edge set, pivot-based node removal, centroid-insertion
//! refinement, and inverse-distance field transfer onto the new nodes.
//! Boundary (frozen) nodes are never touched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{embedded_coords, knn_edges, minimal_image, NodeSet, PeriodicSpec};

/// Fractions of the node set scheduled for coarsening (`c`) and refinement
/// (`f`), plus the neighbour count used for scoring, removal and triangles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemeshConfig {
    pub coarsen_fraction: f64,
    pub refine_fraction: f64,
    pub k: usize,
}

impl RemeshConfig {
    pub fn new(coarsen_fraction: f64, refine_fraction: f64, k: usize) -> Result<Self> {
        let cfg = Self { coarsen_fraction, refine_fraction, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.coarsen_fraction;
        let f = self.refine_fraction;
        if !(0.0..1.0).contains(&c) || !(0.0..1.0).contains(&f) || c + f > 1.0 {
            return Err(Error::Config(format!(
                "remesh fractions must satisfy 0 <= c < 1, 0 <= f < 1, c + f <= 1; got c = {c}, f = {f}"
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("remesh k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-node gradient magnitude score: the sum over incoming k-NN edges of
/// the Euclidean norm of the field difference along the edge.
pub fn gradient_scores(
    nodes: &NodeSet,
    values: &[f64],
    n: usize,
    k: usize,
    periodic: &PeriodicSpec,
) -> Result<Vec<f64>> {
    if values.len() != nodes.len() * n {
        return Err(Error::Contract(format!(
            "field has {} values, expected {} nodes x {n}",
            values.len(),
            nodes.len()
        )));
    }
    let edges = knn_edges(nodes, k, periodic)?;
    let mut scores = vec![0.0; nodes.len()];
    for e in 0..edges.len() {
        let s = edges.senders[e];
        let r = edges.receivers[e];
        let mut acc = 0.0;
        for c in 0..n {
            let d = values[r * n + c] - values[s * n + c];
            acc += d * d;
        }
        scores[r] += acc.sqrt();
    }
    Ok(scores)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of non-frozen nodes ordered by (score, index); ascending when
/// `ascending`, by descending score otherwise.
fn ranked_eligible(nodes: &NodeSet, scores: &[f64], ascending: bool) -> Vec<usize> {
    let mut eligible: Vec<usize> = (0..nodes.len()).filter(|&i| !nodes.frozen[i]).collect();
    eligible.sort_by(|&a, &b| {
        let ka = (scores[a], a);
        let kb = (scores[b], b);
        if ascending {
            ka.partial_cmp(&kb).unwrap()
        } else {
            (kb.0, a).partial_cmp(&(ka.0, b)).unwrap()
        }
    });
    eligible
}

/// Guillard-style coarsening: pick the ceil(c |V|) lowest-score non-frozen
/// nodes as pivots; visit them in ascending score order and, for each pivot
/// that still survives, remove its k nearest non-frozen neighbours. Stops
/// early rather than leaving fewer than k + 1 nodes. Returns the reduced set
/// and the surviving original indices (order preserved).
pub fn coarsen(
    nodes: &NodeSet,
    scores: &[f64],
    c: f64,
    k: usize,
    periodic: &PeriodicSpec,
) -> Result<(NodeSet, Vec<usize>)> {
    if scores.len() != nodes.len() {
        return Err(Error::Contract("one score per node required".into()));
    }
    let identity = || (nodes.clone(), (0..nodes.len()).collect::<Vec<_>>());
    if c == 0.0 {
        return Ok(identity());
    }
    let m = (c * nodes.len() as f64).ceil() as usize;
    let eligible = ranked_eligible(nodes, scores, true);
    if m == 0 || eligible.is_empty() {
        return Ok(identity());
    }
    let pivots: Vec<usize> = eligible.iter().copied().take(m).collect();

    // k nearest non-frozen neighbours per pivot, in the original node set.
    let (coords, dim) = embedded_coords(nodes, periodic)?;
    let neighbour_lists: Vec<Vec<usize>> = pivots
        .iter()
        .map(|&p| {
            let pc = &coords[p * dim..(p + 1) * dim];
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for &cand in &eligible {
                if cand == p {
                    continue;
                }
                let d2 = squared_distance(pc, &coords[cand * dim..(cand + 1) * dim]);
                if best.len() == k {
                    let worst = best[k - 1];
                    if d2 > worst.0 || (d2 == worst.0 && cand > worst.1) {
                        continue;
                    }
                }
                let key = (d2, cand);
                let at = best.partition_point(|&(bd, bs)| (bd, bs) < key);
                best.insert(at, key);
                if best.len() > k {
                    best.pop();
                }
            }
            best.into_iter().map(|(_, i)| i).collect()
        })
        .collect();

    let mut removed = vec![false; nodes.len()];
    let mut survivors = nodes.len();
    'pivots: for (pi, &pivot) in pivots.iter().enumerate() {
        if removed[pivot] {
            continue;
        }
        for &nb in &neighbour_lists[pi] {
            if removed[nb] {
                continue;
            }
            if survivors <= k + 1 {
                break 'pivots;
            }
            removed[nb] = true;
            survivors -= 1;
        }
    }

    let kept: Vec<usize> = (0..nodes.len()).filter(|&i| !removed[i]).collect();
    let mut params = Vec::with_capacity(kept.len() * nodes.n_p);
    for &i in &kept {
        params.extend_from_slice(nodes.param(i));
    }
    let reduced = NodeSet {
        positions: kept.iter().map(|&i| nodes.positions[i]).collect(),
        omega: kept.iter().map(|&i| nodes.omega[i]).collect(),
        frozen: kept.iter().map(|&i| nodes.frozen[i]).collect(),
        params,
        n_p: nodes.n_p,
    };
    Ok((reduced, kept))
}

/// Centroid positions a refinement pass would insert around one pivot: its
/// k nearest neighbours sorted by polar angle, one triangle per consecutive
/// pair (wrapping), a new node at each centroid.
fn pivot_centroids(
    nodes: &NodeSet,
    coords: &[f64],
    dim: usize,
    pivot: usize,
    k: usize,
    periodic: &PeriodicSpec,
) -> Vec<[f64; 2]> {
    let pc = &coords[pivot * dim..(pivot + 1) * dim];
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for cand in 0..nodes.len() {
        if cand == pivot {
            continue;
        }
        let d2 = squared_distance(pc, &coords[cand * dim..(cand + 1) * dim]);
        if best.len() == k {
            let worst = best[k - 1];
            if d2 > worst.0 || (d2 == worst.0 && cand > worst.1) {
                continue;
            }
        }
        let key = (d2, cand);
        let at = best.partition_point(|&(bd, bs)| (bd, bs) < key);
        best.insert(at, key);
        if best.len() > k {
            best.pop();
        }
    }
    let origin = nodes.positions[pivot];
    let mut displaced: Vec<([f64; 2], usize)> = best
        .into_iter()
        .map(|(_, nb)| {
            let mut d = [nodes.positions[nb][0] - origin[0], nodes.positions[nb][1] - origin[1]];
            for axis in 0..2 {
                if let Some(p) = periodic.period(axis) {
                    d[axis] = minimal_image(d[axis], p);
                }
            }
            (d, nb)
        })
        .collect();
    displaced.sort_by(|a, b| {
        let aa = a.0[1].atan2(a.0[0]);
        let ab = b.0[1].atan2(b.0[0]);
        (aa, a.1).partial_cmp(&(ab, b.1)).unwrap()
    });
    let kk = displaced.len();
    (0..kk)
        .map(|j| {
            let d1 = displaced[j].0;
            let d2 = displaced[(j + 1) % kk].0;
            let mut c = [origin[0] + (d1[0] + d2[0]) / 3.0, origin[1] + (d1[1] + d2[1]) / 3.0];
            for axis in 0..2 {
                if let Some(p) = periodic.period(axis) {
                    c[axis] = c[axis].rem_euclid(p);
                }
            }
            c
        })
        .collect()
}

/// Refinement: pick the ceil(f |V|) highest-score non-frozen nodes, form k
/// triangles per pivot from consecutive angular neighbour pairs and insert a
/// node at each centroid (deduplicated within 1e-9). New nodes carry
/// omega = 0, frozen = false, and inverse-distance-weighted parameters.
/// Returns the enlarged set and the number of inserted nodes.
pub fn refine(
    nodes: &NodeSet,
    scores: &[f64],
    f: f64,
    k: usize,
    periodic: &PeriodicSpec,
) -> Result<(NodeSet, usize)> {
    if scores.len() != nodes.len() {
        return Err(Error::Contract("one score per node required".into()));
    }
    if f == 0.0 {
        return Ok((nodes.clone(), 0));
    }
    let m = (f * nodes.len() as f64).ceil() as usize;
    let eligible = ranked_eligible(nodes, scores, false);
    if m == 0 || eligible.is_empty() || nodes.len() <= k {
        return Ok((nodes.clone(), 0));
    }
    let (coords, dim) = embedded_coords(nodes, periodic)?;
    let mut candidates: Vec<[f64; 2]> = Vec::new();
    for &pivot in eligible.iter().take(m) {
        candidates.extend(pivot_centroids(nodes, &coords, dim, pivot, k, periodic));
    }
    // Deduplicate within 1e-9 via a lexicographic sort and window scan.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].partial_cmp(&candidates[b]).unwrap());
    const TOL: f64 = 1e-9;
    let mut unique: Vec<[f64; 2]> = Vec::with_capacity(candidates.len());
    for &i in &order {
        let c = candidates[i];
        let dup = unique
            .iter()
            .rev()
            .take_while(|u| (c[0] - u[0]).abs() <= TOL)
            .any(|u| (c[1] - u[1]).abs() <= TOL);
        if !dup {
            unique.push(c);
        }
    }

    let mut out = nodes.clone();
    for pos in &unique {
        out.positions.push(*pos);
        out.omega.push(0);
        out.frozen.push(false);
        if nodes.n_p > 0 {
            let p = idw_at(nodes, &nodes.params, nodes.n_p, *pos, k, periodic)?;
            out.params.extend_from_slice(&p);
        }
    }
    let added = unique.len();
    Ok((out, added))
}

/// Inverse-distance-weighted (power 2) interpolation of node values at one
/// query position, over the k nearest source nodes. Exact on coincident
/// nodes and constant-preserving.
fn idw_at(
    source: &NodeSet,
    values: &[f64],
    n: usize,
    query: [f64; 2],
    k: usize,
    periodic: &PeriodicSpec,
) -> Result<Vec<f64>> {
    let k = k.min(source.len());
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..source.len() {
        let mut d2 = 0.0;
        for axis in 0..2 {
            let mut d = source.positions[i][axis] - query[axis];
            if let Some(p) = periodic.period(axis) {
                d = minimal_image(d, p);
            }
            d2 += d * d;
        }
        if best.len() == k {
            let worst = best[k - 1];
            if d2 > worst.0 || (d2 == worst.0 && i > worst.1) {
                continue;
            }
        }
        let key = (d2, i);
        let at = best.partition_point(|&(bd, bs)| (bd, bs) < key);
        best.insert(at, key);
        if best.len() > k {
            best.pop();
        }
    }
    if let Some(&(d2, i)) = best.first() {
        if d2 < 1e-24 {
            return Ok(values[i * n..(i + 1) * n].to_vec());
        }
    }
    let mut out = vec![0.0; n];
    let mut total = 0.0;
    for &(d2, i) in &best {
        let w = 1.0 / d2;
        total += w;
        for c in 0..n {
            out[c] += w * values[i * n + c];
        }
    }
    for c in &mut out {
        *c /= total;
    }
    Ok(out)
}

/// Interpolate a field defined on `source` nodes onto arbitrary positions
/// with k-nearest inverse-distance weighting.
pub fn interpolate_idw(
    source: &NodeSet,
    values: &[f64],
    n: usize,
    targets: &[[f64; 2]],
    k: usize,
    periodic: &PeriodicSpec,
) -> Result<Vec<f64>> {
    if values.len() != source.len() * n {
        return Err(Error::Contract("value count does not match source nodes".into()));
    }
    let mut out = Vec::with_capacity(targets.len() * n);
    for &t in targets {
        out.extend(idw_at(source, values, n, t, k, periodic)?);
    }
    Ok(out)
}

/// Full adaptation pass: score, coarsen, refine, transfer. Values at
/// surviving nodes are preserved exactly; inserted nodes receive
/// inverse-distance-weighted values from the k nearest surviving nodes.
/// The caller is responsible for rebuilding the graph hierarchy.
pub fn adapt(
    nodes: &NodeSet,
    values: &[f64],
    n: usize,
    cfg: &RemeshConfig,
    periodic: &PeriodicSpec,
) -> Result<(NodeSet, Vec<f64>)> {
    cfg.validate()?;
    if values.len() != nodes.len() * n {
        return Err(Error::Contract(format!(
            "field has {} values, expected {} nodes x {n}",
            values.len(),
            nodes.len()
        )));
    }
    if cfg.coarsen_fraction == 0.0 && cfg.refine_fraction == 0.0 {
        return Ok((nodes.clone(), values.to_vec()));
    }
    let scores = gradient_scores(nodes, values, n, cfg.k, periodic)?;
    let (reduced, kept) = coarsen(nodes, &scores, cfg.coarsen_fraction, cfg.k, periodic)?;
    let mut reduced_values = Vec::with_capacity(kept.len() * n);
    let mut reduced_scores = Vec::with_capacity(kept.len());
    for &i in &kept {
        reduced_values.extend_from_slice(&values[i * n..(i + 1) * n]);
        reduced_scores.push(scores[i]);
    }
    let (enlarged, added) = refine(&reduced, &reduced_scores, cfg.refine_fraction, cfg.k, periodic)?;
    let mut out_values = reduced_values.clone();
    for j in 0..added {
        let pos = enlarged.positions[reduced.len() + j];
        let v = idw_at(&reduced, &reduced_values, n, pos, cfg.k, periodic)?;
        out_values.extend_from_slice(&v);
    }
    Ok((enlarged, out_values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_nodes;
    use crate::geometry::Domain;

    fn chain3() -> NodeSet {
        NodeSet {
            positions: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            omega: vec![0; 3],
            frozen: vec![false; 3],
            params: Vec::new(),
            n_p: 0,
        }
    }

    #[test]
    fn constant_field_scores_zero() {
        let nodes = random_nodes(&Domain::unit_periodic(), 30, 0, 1);
        let values = vec![0.7; 30];
        let scores = gradient_scores(&nodes, &values, 1, 3, &PeriodicSpec::none()).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn chain_scores_enumerated() {
        let nodes = chain3();
        let values = vec![0.0, 1.0, 0.0];
        let scores = gradient_scores(&nodes, &values, 1, 1, &PeriodicSpec::none()).unwrap();
        assert_eq!(scores, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn scores_shift_invariant() {
        let nodes = random_nodes(&Domain::unit_periodic(), 40, 0, 2);
        let values: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + 5.0).collect();
        let a = gradient_scores(&nodes, &values, 1, 4, &PeriodicSpec::none()).unwrap();
        let b = gradient_scores(&nodes, &shifted, 1, 4, &PeriodicSpec::none()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn coarsen_zero_fraction_is_identity() {
        let nodes = random_nodes(&Domain::unit_periodic(), 20, 0, 3);
        let scores = vec![1.0; 20];
        let (out, kept) = coarsen(&nodes, &scores, 0.0, 3, &PeriodicSpec::none()).unwrap();
        assert_eq!(out, nodes);
        assert_eq!(kept.len(), 20);
    }

    /// Five evenly spaced interior nodes, uniform scores, one pivot, k = 1:
    /// exactly one node is removed.
    #[test]
    fn coarsen_single_pivot_removes_one() {
        let nodes = NodeSet {
            positions: (0..5).map(|i| [i as f64, 0.0]).collect(),
            omega: vec![0; 5],
            frozen: vec![false; 5],
            params: Vec::new(),
            n_p: 0,
        };
        let scores = vec![2.0; 5];
        let (out, kept) = coarsen(&nodes, &scores, 0.2, 1, &PeriodicSpec::none()).unwrap();
        assert_eq!(out.len(), 4);
        // Pivot is node 0 (lowest index among equal scores); it removes its
        // nearest neighbour, node 1.
        assert_eq!(kept, vec![0, 2, 3, 4]);
    }

    #[test]
    fn coarsen_never_removes_frozen() {
        let mut nodes = random_nodes(&Domain::unit_periodic(), 50, 0, 4);
        for i in 0..10 {
            nodes.frozen[i] = true;
            nodes.omega[i] = 1;
        }
        let scores = vec![0.5; 50];
        let (out, kept) = coarsen(&nodes, &scores, 0.4, 2, &PeriodicSpec::none()).unwrap();
        let frozen_before = nodes.frozen.iter().filter(|&&f| f).count();
        let frozen_after = out.frozen.iter().filter(|&&f| f).count();
        assert_eq!(frozen_before, frozen_after);
        for i in 0..10 {
            assert!(kept.contains(&i));
        }
    }

    #[test]
    fn coarsen_stops_before_exhausting() {
        let nodes = random_nodes(&Domain::unit_periodic(), 8, 0, 9);
        let scores = vec![1.0; 8];
        let (out, _) = coarsen(&nodes, &scores, 0.9, 3, &PeriodicSpec::none()).unwrap();
        assert!(out.len() >= 4, "must keep at least k + 1 nodes, kept {}", out.len());
    }

    #[test]
    fn refine_zero_fraction_is_identity() {
        let nodes = random_nodes(&Domain::unit_periodic(), 20, 0, 5);
        let scores = vec![1.0; 20];
        let (out, added) = refine(&nodes, &scores, 0.0, 3, &PeriodicSpec::none()).unwrap();
        assert_eq!(out, nodes);
        assert_eq!(added, 0);
    }

    /// Pivot at the origin with three unit-distance neighbours at 0, 120 and
    /// 240 degrees: the three triangle centroids, one per consecutive pair.
    #[test]
    fn refine_symmetric_three_neighbours() {
        let deg = |d: f64| d.to_radians();
        let nodes = NodeSet {
            positions: vec![
                [0.0, 0.0],
                [deg(0.0).cos(), deg(0.0).sin()],
                [deg(120.0).cos(), deg(120.0).sin()],
                [deg(240.0).cos(), deg(240.0).sin()],
            ],
            omega: vec![0; 4],
            frozen: vec![false, true, true, true],
            params: Vec::new(),
            n_p: 0,
        };
        // Only the pivot is eligible; f small enough to select exactly it.
        let scores = vec![9.0, 0.0, 0.0, 0.0];
        let (out, added) = refine(&nodes, &scores, 0.25, 3, &PeriodicSpec::none()).unwrap();
        assert_eq!(added, 3);
        for j in 0..3 {
            let a = nodes.positions[1 + j];
            let b = nodes.positions[1 + (j + 1) % 3];
            let centroid = [(a[0] + b[0]) / 3.0, (a[1] + b[1]) / 3.0];
            let found = out.positions[4..]
                .iter()
                .any(|p| (p[0] - centroid[0]).abs() < 1e-12 && (p[1] - centroid[1]).abs() < 1e-12);
            assert!(found, "expected centroid {centroid:?}");
        }
        // All inserted nodes are unfrozen interior points inside the hull.
        for i in 4..out.len() {
            assert!(!out.frozen[i]);
            assert_eq!(out.omega[i], 0);
            let r = (out.positions[i][0].powi(2) + out.positions[i][1].powi(2)).sqrt();
            assert!(r < 1.0);
        }
    }

    #[test]
    fn refine_bounded_and_deduplicated() {
        let nodes = random_nodes(&Domain::unit_periodic(), 60, 0, 6);
        let scores: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let k = 4;
        let f = 0.1;
        let (out, added) = refine(&nodes, &scores, f, k, &PeriodicSpec::xy(1.0, 1.0)).unwrap();
        let m = (f * 60.0).ceil() as usize;
        assert!(added <= k * m);
        assert_eq!(out.len(), 60 + added);
        for i in 0..out.len() {
            for j in (i + 1)..out.len().min(i + 50) {
                let dx = (out.positions[i][0] - out.positions[j][0]).abs();
                let dy = (out.positions[i][1] - out.positions[j][1]).abs();
                assert!(
                    !(i >= 60 && j >= 60 && dx <= 1e-9 && dy <= 1e-9),
                    "inserted duplicates at {i}, {j}"
                );
            }
        }
    }

    #[test]
    fn adapt_identity_when_disabled() {
        let nodes = random_nodes(&Domain::unit_periodic(), 25, 0, 7);
        let values: Vec<f64> = (0..25).map(|i| (i as f64).cos()).collect();
        let cfg = RemeshConfig::new(0.0, 0.0, 3).unwrap();
        let (out_nodes, out_values) = adapt(&nodes, &values, 1, &cfg, &PeriodicSpec::none()).unwrap();
        assert_eq!(out_nodes, nodes);
        assert_eq!(out_values, values);
    }

    #[test]
    fn adapt_transfers_constants_exactly() {
        let nodes = random_nodes(&Domain::unit_periodic(), 80, 0, 8);
        let values = vec![0.7; 80];
        let cfg = RemeshConfig::new(0.4, 0.1, 4).unwrap();
        let (out_nodes, out_values) = adapt(&nodes, &values, 1, &cfg, &PeriodicSpec::xy(1.0, 1.0)).unwrap();
        assert_eq!(out_values.len(), out_nodes.len());
        for v in &out_values {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    /// IDW on a linear field over the hand-built 3-neighbour configuration:
    /// the transfer matches an independent hand evaluation of the power-2
    /// formula, and its deviation from the linear value stays bounded by the
    /// hand-derived error of that configuration (IDW is not exact on linear
    /// fields).
    #[test]
    fn idw_linear_field_within_tolerance() {
        let nodes = NodeSet {
            positions: vec![
                [0.0, 0.0],
                [1.0, 0.0],
                [-0.5, 3f64.sqrt() / 2.0],
                [-0.5, -(3f64.sqrt()) / 2.0],
            ],
            omega: vec![0; 4],
            frozen: vec![false; 4],
            params: Vec::new(),
            n_p: 0,
        };
        let values = vec![0.5, 1.5, 0.0, 0.0]; // u = x + 0.5
        // Centroid of (origin, n0, n1); its 3 nearest sources are those
        // same vertices.
        let query = [(0.0 + 1.0 - 0.5) / 3.0, (0.0 + 0.0 + 3f64.sqrt() / 2.0) / 3.0];
        let got = idw_at(&nodes, &values, 1, query, 3, &PeriodicSpec::none()).unwrap()[0];
        // Hand evaluation of sum(w_i u_i)/sum(w_i) with w_i = 1/d_i^2.
        let mut num = 0.0;
        let mut den = 0.0;
        for (pos, u) in nodes.positions[..3].iter().zip(&values[..3]) {
            let d2 = (pos[0] - query[0]).powi(2) + (pos[1] - query[1]).powi(2);
            num += u / d2;
            den += 1.0 / d2;
        }
        let hand = num / den;
        assert!((got - hand).abs() < 1e-12, "IDW {got} vs hand evaluation {hand}");
        // Hand-derived deviation of this configuration from the linear
        // value (~0.11); allow a small margin over it.
        let exact = query[0] + 0.5;
        assert!((got - exact).abs() <= 0.12, "IDW {got} vs linear {exact}");
    }

    #[test]
    fn adapt_deterministic() {
        let nodes = random_nodes(&Domain::unit_periodic(), 100, 0, 12);
        let values: Vec<f64> = (0..100).map(|i| ((i * 13 % 17) as f64 * 0.3).sin()).collect();
        let cfg = RemeshConfig::new(0.3, 0.05, 4).unwrap();
        let p = PeriodicSpec::xy(1.0, 1.0);
        let a = adapt(&nodes, &values, 1, &cfg, &p).unwrap();
        let b = adapt(&nodes, &values, 1, &cfg, &p).unwrap();
        assert_eq!(a, b);
    }
}
