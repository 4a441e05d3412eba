//! Single-scale attributed graphs and the multi-level hierarchy used by the
//! V-cycle: grid-based coarsening with parent/child assignments and the
//! inter-scale edge sets consumed by the downward/upward transfer layers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{knn_edges, relative_position, Domain, EdgeSet, NodeSet, PeriodicSpec};

/// One scale of the hierarchy: node positions, directed edges and geometric
/// edge attributes. At level 1 the edge attributes are the relative sender
/// to receiver positions; at coarser levels they are means of the child edge
/// attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    /// 1-based scale index.
    pub level: usize,
    pub positions: Vec<[f64; 2]>,
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    pub edge_attrs: Vec<[f64; 2]>,
}

impl Graph {
    pub fn from_edges(level: usize, positions: Vec<[f64; 2]>, edges: EdgeSet) -> Self {
        Self {
            level,
            positions,
            senders: edges.senders,
            receivers: edges.receivers,
            edge_attrs: edges.rel_pos,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }

    pub fn mean_in_degree(&self) -> f64 {
        if self.positions.is_empty() {
            0.0
        } else {
            self.senders.len() as f64 / self.positions.len() as f64
        }
    }
}

/// Child-to-parent assignment between two consecutive scales together with
/// the child -> parent relative positions (one entry per child node).
#[derive(Debug, Clone, PartialEq)]
pub struct InterScaleEdges {
    pub child_to_parent: Vec<usize>,
    pub rel_pos: Vec<[f64; 2]>,
}

impl InterScaleEdges {
    pub fn n_children(&self) -> usize {
        self.child_to_parent.len()
    }
}

/// The full multi-scale structure: `graphs[0]` is the high-resolution graph,
/// `inter[i]` connects `graphs[i]` (children) to `graphs[i + 1]` (parents).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphHierarchy {
    pub graphs: Vec<Graph>,
    pub inter: Vec<InterScaleEdges>,
    pub cell_sizes: Vec<(f64, f64)>,
}

impl GraphHierarchy {
    pub fn levels(&self) -> usize {
        self.graphs.len()
    }

    pub fn finest(&self) -> &Graph {
        &self.graphs[0]
    }
}

/// Per-level summary emitted by the diagnostics CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelInfo {
    pub level: usize,
    pub nodes: usize,
    pub edges: usize,
    pub mean_in_degree: f64,
}

pub fn hierarchy_info(h: &GraphHierarchy) -> Vec<LevelInfo> {
    h.graphs
        .iter()
        .map(|g| LevelInfo {
            level: g.level,
            nodes: g.n_nodes(),
            edges: g.n_edges(),
            mean_in_degree: g.mean_in_degree(),
        })
        .collect()
}

fn cell_index(x: f64, min: f64, cell: f64, n_cells: usize) -> usize {
    let i = ((x - min) / cell).floor();
    (i.max(0.0) as usize).min(n_cells.saturating_sub(1))
}

/// Partition the domain into a regular grid of `cell` size anchored at the
/// domain minimum corner, place one parent per non-empty cell at the mean
/// position of its children, and lift edges: a coarse edge s -> r exists iff
/// at least one fine edge runs from Ch(s) to Ch(r) with s != r, carrying the
/// mean attribute of the contributing fine edges.
pub fn coarsen_graph(
    fine: &Graph,
    cell: (f64, f64),
    domain: &Domain,
    periodic: &PeriodicSpec,
) -> Result<(Graph, InterScaleEdges)> {
    if !(cell.0 > 0.0 && cell.1 > 0.0) {
        return Err(Error::Config(format!("cell sizes must be positive, got {cell:?}")));
    }
    if fine.positions.is_empty() {
        return Err(Error::Config("cannot coarsen an empty graph".into()));
    }
    let ext = domain.extent();
    let ncx = (ext[0] / cell.0).ceil().max(1.0) as usize;
    let ncy = (ext[1] / cell.1).ceil().max(1.0) as usize;

    // Cells keyed by (row, column); BTreeMap gives a deterministic parent order.
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in fine.positions.iter().enumerate() {
        let cx = cell_index(p[0], domain.min[0], cell.0, ncx);
        let cy = cell_index(p[1], domain.min[1], cell.1, ncy);
        cells.entry((cy, cx)).or_default().push(i);
    }

    let n_children = fine.positions.len();
    let mut child_to_parent = vec![usize::MAX; n_children];
    let mut parent_positions = Vec::with_capacity(cells.len());
    for (parent, children) in cells.values().enumerate() {
        let mut sum = [0.0f64; 2];
        for &c in children {
            sum[0] += fine.positions[c][0];
            sum[1] += fine.positions[c][1];
            child_to_parent[c] = parent;
        }
        let inv = 1.0 / children.len() as f64;
        // Cells are contiguous intervals of the unwrapped [0, P) coordinates,
        // so children never straddle the periodic seam and the arithmetic mean
        // is the correct (circular) mean of the cell.
        parent_positions.push([sum[0] * inv, sum[1] * inv]);
    }

    let rel_pos: Vec<[f64; 2]> = (0..n_children)
        .map(|c| relative_position(fine.positions[c], parent_positions[child_to_parent[c]], periodic))
        .collect();

    // Group fine edges by (parent receiver, parent sender); accumulate the
    // attribute sums in fine-edge order for a deterministic mean.
    let mut groups: BTreeMap<(usize, usize), ([f64; 2], usize)> = BTreeMap::new();
    for k in 0..fine.senders.len() {
        let ps = child_to_parent[fine.senders[k]];
        let pr = child_to_parent[fine.receivers[k]];
        if ps == pr {
            continue;
        }
        let entry = groups.entry((pr, ps)).or_insert(([0.0, 0.0], 0));
        entry.0[0] += fine.edge_attrs[k][0];
        entry.0[1] += fine.edge_attrs[k][1];
        entry.1 += 1;
    }

    let mut senders = Vec::with_capacity(groups.len());
    let mut receivers = Vec::with_capacity(groups.len());
    let mut edge_attrs = Vec::with_capacity(groups.len());
    for (&(pr, ps), &(sum, count)) in &groups {
        let inv = 1.0 / count as f64;
        senders.push(ps);
        receivers.push(pr);
        edge_attrs.push([sum[0] * inv, sum[1] * inv]);
    }

    let coarse = Graph { level: fine.level + 1, positions: parent_positions, senders, receivers, edge_attrs };
    Ok((coarse, InterScaleEdges { child_to_parent, rel_pos }))
}

/// Build the `levels`-scale hierarchy: level 1 from the k-NN edges of the
/// node set, coarser levels by repeated grid coarsening with the given
/// strictly increasing cell sizes (`cell_sizes.len() == levels - 1`).
pub fn build_hierarchy(
    nodes: &NodeSet,
    levels: usize,
    cell_sizes: &[(f64, f64)],
    k: usize,
    domain: &Domain,
) -> Result<GraphHierarchy> {
    if levels == 0 {
        return Err(Error::Config("hierarchy needs at least one level".into()));
    }
    if cell_sizes.len() != levels - 1 {
        return Err(Error::Config(format!(
            "expected {} cell sizes for {} levels, got {}",
            levels - 1,
            levels,
            cell_sizes.len()
        )));
    }
    for w in cell_sizes.windows(2) {
        if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            return Err(Error::Config(format!("cell sizes must strictly increase, got {cell_sizes:?}")));
        }
    }
    let periodic = domain.periodic();
    let edges = knn_edges(nodes, k, &periodic)?;
    let mut graphs = vec![Graph::from_edges(1, nodes.positions.clone(), edges)];
    let mut inter = Vec::with_capacity(levels - 1);
    for &cell in cell_sizes {
        let (coarse, link) = coarsen_graph(graphs.last().unwrap(), cell, domain, &periodic)?;
        if coarse.n_nodes() == 0 {
            return Err(Error::Config(format!("level {} collapsed to zero nodes", coarse.level)));
        }
        inter.push(link);
        graphs.push(coarse);
    }
    Ok(GraphHierarchy { graphs, inter, cell_sizes: cell_sizes.to_vec() })
}

/// Wrap a hierarchy check used by tests and the acceptance suite: parents sit
/// at the mean of their children and coarse edge attributes are means of the
/// contributing fine attributes.
pub fn check_hierarchy_means(h: &GraphHierarchy, tol: f64) -> Result<()> {
    for (i, link) in h.inter.iter().enumerate() {
        let fine = &h.graphs[i];
        let coarse = &h.graphs[i + 1];
        let n_parents = coarse.n_nodes();
        let mut sums = vec![[0.0f64; 2]; n_parents];
        let mut counts = vec![0usize; n_parents];
        for (c, &p) in link.child_to_parent.iter().enumerate() {
            sums[p][0] += fine.positions[c][0];
            sums[p][1] += fine.positions[c][1];
            counts[p] += 1;
        }
        for p in 0..n_parents {
            if counts[p] == 0 {
                return Err(Error::Contract(format!("parent {p} at level {} has no children", coarse.level)));
            }
            let mean = [sums[p][0] / counts[p] as f64, sums[p][1] / counts[p] as f64];
            let d = ((mean[0] - coarse.positions[p][0]).powi(2) + (mean[1] - coarse.positions[p][1]).powi(2)).sqrt();
            if d > tol {
                return Err(Error::Contract(format!(
                    "parent {p} at level {} off the child mean by {d}",
                    coarse.level
                )));
            }
        }
        // Recompute coarse edge attributes independently.
        let mut groups: BTreeMap<(usize, usize), ([f64; 2], usize)> = BTreeMap::new();
        for k in 0..fine.senders.len() {
            let ps = link.child_to_parent[fine.senders[k]];
            let pr = link.child_to_parent[fine.receivers[k]];
            if ps == pr {
                continue;
            }
            let e = groups.entry((pr, ps)).or_insert(([0.0, 0.0], 0));
            e.0[0] += fine.edge_attrs[k][0];
            e.0[1] += fine.edge_attrs[k][1];
            e.1 += 1;
        }
        if groups.len() != coarse.n_edges() {
            return Err(Error::Contract(format!(
                "level {} edge count {} vs regrouped {}",
                coarse.level,
                coarse.n_edges(),
                groups.len()
            )));
        }
        for k in 0..coarse.n_edges() {
            let key = (coarse.receivers[k], coarse.senders[k]);
            let (sum, count) = groups[&key];
            for c in 0..2 {
                let mean = sum[c] / count as f64;
                if (mean - coarse.edge_attrs[k][c]).abs() > tol {
                    return Err(Error::Contract(format!(
                        "coarse edge {k} at level {} attr off by {}",
                        coarse.level,
                        (mean - coarse.edge_attrs[k][c]).abs()
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_nodes, sample_nodes};

    fn graph_of(positions: Vec<[f64; 2]>, edges: Vec<(usize, usize, [f64; 2])>) -> Graph {
        Graph {
            level: 1,
            positions,
            senders: edges.iter().map(|e| e.0).collect(),
            receivers: edges.iter().map(|e| e.1).collect(),
            edge_attrs: edges.iter().map(|e| e.2).collect(),
        }
    }

    fn open_unit() -> Domain {
        Domain {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
            left: crate::geometry::BoundaryKind::Dirichlet,
            right: crate::geometry::BoundaryKind::Dirichlet,
            bottom: crate::geometry::BoundaryKind::Dirichlet,
            top: crate::geometry::BoundaryKind::Dirichlet,
        }
    }

    #[test]
    fn singleton_cells_copy_positions() {
        let g = graph_of(
            vec![[0.1, 0.1], [0.6, 0.1], [0.1, 0.6], [0.6, 0.6]],
            vec![],
        );
        let (coarse, link) = coarsen_graph(&g, (0.5, 0.5), &open_unit(), &PeriodicSpec::none()).unwrap();
        assert_eq!(coarse.n_nodes(), 4);
        let mut got = coarse.positions.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = g.positions.clone();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert_eq!(link.child_to_parent.len(), 4);
    }

    #[test]
    fn two_children_mean_position() {
        let g = graph_of(vec![[0.1, 0.1], [0.3, 0.1]], vec![]);
        let (coarse, link) = coarsen_graph(&g, (0.5, 0.5), &open_unit(), &PeriodicSpec::none()).unwrap();
        assert_eq!(coarse.n_nodes(), 1);
        assert!((coarse.positions[0][0] - 0.2).abs() < 1e-15);
        assert!((coarse.positions[0][1] - 0.1).abs() < 1e-15);
        assert_eq!(link.child_to_parent, vec![0, 0]);
        // child -> parent relative positions
        assert!((link.rel_pos[0][0] - 0.1).abs() < 1e-15);
        assert!((link.rel_pos[1][0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn coarse_edge_attribute_is_mean_of_group() {
        // a, a' in the left cell; b, b' in the right cell.
        let g = graph_of(
            vec![[0.1, 0.2], [0.2, 0.3], [0.7, 0.2], [0.8, 0.3]],
            vec![(0, 2, [0.1, 0.0]), (1, 3, [0.3, 0.0])],
        );
        let (coarse, _) = coarsen_graph(&g, (0.5, 0.5), &open_unit(), &PeriodicSpec::none()).unwrap();
        assert_eq!(coarse.n_edges(), 1);
        assert!((coarse.edge_attrs[0][0] - 0.2).abs() < 1e-15);
        assert!((coarse.edge_attrs[0][1]).abs() < 1e-15);
    }

    #[test]
    fn intra_cell_edges_dropped() {
        let g = graph_of(
            vec![[0.1, 0.1], [0.2, 0.2], [0.7, 0.7]],
            vec![(0, 1, [0.1, 0.1]), (1, 0, [-0.1, -0.1]), (1, 2, [0.5, 0.5])],
        );
        let (coarse, _) = coarsen_graph(&g, (0.5, 0.5), &open_unit(), &PeriodicSpec::none()).unwrap();
        // The two intra-cell edges collapse to self-edges and are dropped.
        assert_eq!(coarse.n_edges(), 1);
        assert_ne!(coarse.senders[0], coarse.receivers[0]);
    }

    #[test]
    fn single_level_hierarchy() {
        let nodes = random_nodes(&Domain::unit_periodic(), 30, 0, 1);
        let h = build_hierarchy(&nodes, 1, &[], 3, &Domain::unit_periodic()).unwrap();
        assert_eq!(h.levels(), 1);
        assert!(h.inter.is_empty());
        assert_eq!(h.finest().n_edges(), 90);
    }

    #[test]
    fn two_level_counts() {
        let nodes = sample_nodes(&Domain::unit_periodic(), 0.1, 5).unwrap();
        let h = build_hierarchy(&nodes, 2, &[(0.25, 0.25)], 4, &Domain::unit_periodic()).unwrap();
        assert!(h.graphs[1].n_nodes() <= 16);
        // Every non-empty cell has exactly one parent: count distinct cells.
        let mut cells: Vec<(usize, usize)> = nodes
            .positions
            .iter()
            .map(|p| (((p[1] / 0.25).floor() as usize).min(3), ((p[0] / 0.25).floor() as usize).min(3)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), h.graphs[1].n_nodes());
        check_hierarchy_means(&h, 1e-12).unwrap();
    }

    #[test]
    fn child_partition_and_monotone_counts() {
        let nodes = random_nodes(&Domain::unit_periodic(), 300, 0, 8);
        let h = build_hierarchy(
            &nodes,
            3,
            &[(0.1, 0.1), (0.25, 0.25)],
            4,
            &Domain::unit_periodic(),
        )
        .unwrap();
        for i in 0..h.inter.len() {
            let fine = &h.graphs[i];
            let coarse = &h.graphs[i + 1];
            assert!(coarse.n_nodes() <= fine.n_nodes());
            assert!(coarse.n_edges() <= fine.n_edges());
            // Every child has exactly one parent; every parent >= 1 child.
            let mut seen = vec![0usize; coarse.n_nodes()];
            for &p in &h.inter[i].child_to_parent {
                assert!(p < coarse.n_nodes());
                seen[p] += 1;
            }
            assert!(seen.iter().all(|&c| c >= 1));
            assert_eq!(h.inter[i].child_to_parent.len(), fine.n_nodes());
        }
        // No coarse self-edges.
        for g in &h.graphs[1..] {
            for k in 0..g.n_edges() {
                assert_ne!(g.senders[k], g.receivers[k]);
            }
        }
    }

    #[test]
    fn deterministic_bit_identical() {
        let nodes = sample_nodes(&Domain::unit_periodic(), 0.05, 77).unwrap();
        let a = build_hierarchy(&nodes, 3, &[(0.1, 0.1), (0.2, 0.2)], 4, &Domain::unit_periodic()).unwrap();
        let b = build_hierarchy(&nodes, 3, &[(0.1, 0.1), (0.2, 0.2)], 4, &Domain::unit_periodic()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        let nodes = random_nodes(&Domain::unit_periodic(), 20, 0, 0);
        assert!(build_hierarchy(&nodes, 0, &[], 3, &Domain::unit_periodic()).is_err());
        assert!(build_hierarchy(&nodes, 2, &[], 3, &Domain::unit_periodic()).is_err());
        assert!(build_hierarchy(&nodes, 3, &[(0.2, 0.2), (0.1, 0.1)], 3, &Domain::unit_periodic()).is_err());
        let g = graph_of(vec![[0.1, 0.1]], vec![]);
        assert!(coarsen_graph(&g, (0.0, 0.1), &open_unit(), &PeriodicSpec::none()).is_err());
    }

    /// Advection defaults on a fine unit square: four levels with strictly
    /// decreasing node counts.
    #[test]
    fn advection_default_cells_four_levels() {
        let nodes = sample_nodes(&Domain::unit_periodic(), 0.012, 3).unwrap();
        let h = build_hierarchy(
            &nodes,
            4,
            &[(0.02, 0.02), (0.04, 0.04), (0.08, 0.08)],
            4,
            &Domain::unit_periodic(),
        )
        .unwrap();
        for w in h.graphs.windows(2) {
            assert!(w[1].n_nodes() < w[0].n_nodes(), "counts must strictly decrease");
        }
        assert_eq!(h.graphs.len(), 4);
        check_hierarchy_means(&h, 1e-12).unwrap();
    }
}
