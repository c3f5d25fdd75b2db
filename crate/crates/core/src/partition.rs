//! Leaf indexing, weighted load balancing and the two partition improvers
//! (Hilbert-curve cut and graph growing with boundary refinement).

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::DofMap;
use crate::exec::Execution;
use crate::mesh::{ElementId, Mesh, Point};
use crate::physics::Problem;

/// Leaf element ids in index order: `indices[i]` is the leaf with index `i`.
pub fn assign_unique_leaf_indices(mesh: &Mesh) -> Vec<ElementId> {
    mesh.active_leaf_elements()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafWeight {
    pub n_gp: usize,
    pub n: usize,
    pub w: f64,
    pub w_star: f64,
}

/// Cost model `w = n_GP * N^3`, normalised by an unrefined element at the base
/// order.
pub fn compute_leaf_weights(
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &Problem,
    leaves: &[ElementId],
    exec: Execution,
) -> Vec<LeafWeight> {
    let p0 = dofs.orders().base_order();
    let n0 = (p0 + 1).pow(mesh.dim() as u32) as f64;
    let w0 = n0 * n0.powi(3);
    exec.map(leaves, |&leaf| {
        let basis = dofs.leaf_basis(mesh, leaf);
        let n_gp = problem.leaf_quadrature(mesh, &basis).n_gp();
        leaf_weight(n_gp, basis.len(), w0)
    })
}

pub fn leaf_weight(n_gp: usize, n: usize, w0: f64) -> LeafWeight {
    let w = n_gp as f64 * (n as f64).powi(3);
    LeafWeight { n_gp, n, w, w_star: w / w0 }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankPartition {
    ranks: usize,
    owner: Vec<usize>,
    sets: Vec<Vec<usize>>,
}

impl RankPartition {
    /// Builds the partition from a leaf-index to rank map.
    pub fn from_owner(ranks: usize, owner: Vec<usize>) -> Self {
        let mut sets = vec![Vec::new(); ranks];
        for (i, &r) in owner.iter().enumerate() {
            sets[r].push(i);
        }
        Self { ranks, owner, sets }
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn rank_of(&self, leaf_index: usize) -> usize {
        self.owner[leaf_index]
    }

    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Leaf indices of a rank in ascending order.
    pub fn leaves(&self, rank: usize) -> &[usize] {
        &self.sets[rank]
    }

    pub fn rank_weights(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ranks];
        for (i, &r) in self.owner.iter().enumerate() {
            out[r] += weights[i];
        }
        out
    }

    /// `max_r W_r / (W / P)`; 1 for an empty partition.
    pub fn imbalance(&self, weights: &[f64]) -> f64 {
        let per = self.rank_weights(weights);
        let total: f64 = per.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }
        per.iter().copied().fold(0.0, f64::max) / (total / self.ranks as f64)
    }
}

/// Rank `r` receives the index block `[floor(rL/P), floor((r+1)L/P))`.
pub fn initial_contiguous_partition(leaves: usize, ranks: usize) -> RankPartition {
    assert!(ranks >= 1, "at least one rank");
    let mut owner = vec![0; leaves];
    for r in 0..ranks {
        for o in &mut owner[r * leaves / ranks..(r + 1) * leaves / ranks] {
            *o = r;
        }
    }
    RankPartition::from_owner(ranks, owner)
}

/// Position of `(x, y)` along the Hilbert curve filling a `2^order` grid.
pub fn hilbert_index(order: u32, mut x: u64, mut y: u64) -> u64 {
    let n = 1u64 << order;
    let mut d = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

const HILBERT_ORDER: u32 = 20;

/// Leaf indices sorted along a Hilbert curve through the centroids.
pub fn hilbert_order(centroids: &[Point]) -> Vec<usize> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in centroids {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if centroids.is_empty() || extent <= 0.0 {
        return (0..centroids.len()).collect();
    }
    let cells = ((1u64 << HILBERT_ORDER) - 1) as f64;
    let mut keyed: Vec<(u64, usize)> = centroids
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let gx = ((c[0] - lo[0]) / extent * cells).round() as u64;
            let gy = ((c[1] - lo[1]) / extent * cells).round() as u64;
            (hilbert_index(HILBERT_ORDER, gx, gy), i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Cuts a sequence into `parts` consecutive blocks minimising the heaviest block.
pub fn bottleneck_cut(weights: &[f64], parts: usize) -> Vec<usize> {
    let fits = |limit: f64| {
        let mut used = 1;
        let mut acc = 0.0;
        for &w in weights {
            if acc + w > limit && acc > 0.0 {
                used += 1;
                acc = 0.0;
            }
            acc += w;
        }
        used <= parts
    };
    let mut lo = weights.iter().copied().fold(0.0, f64::max);
    let mut hi: f64 = weights.iter().sum();
    if !fits(lo) {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if fits(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = lo;
    }
    // greedy fill under the bottleneck, but never leave later parts starved
    let mut block = vec![0; weights.len()];
    let mut part = 0;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let remaining_items = weights.len() - i;
        let remaining_parts = parts - part - 1;
        if acc > 0.0 && part + 1 < parts && (acc + w > hi || remaining_items <= remaining_parts) {
            part += 1;
            acc = 0.0;
        }
        block[i] = part;
        acc += w;
    }
    block
}

/// Hilbert-curve partition balancing `weights`; keeps `initial` when the curve
/// cut would balance worse.
pub fn improve_geometric(initial: &RankPartition, centroids: &[Point], weights: &[f64]) -> RankPartition {
    let ranks = initial.ranks();
    if ranks == 1 {
        return initial.clone();
    }
    let order = hilbert_order(centroids);
    let sorted: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    let blocks = bottleneck_cut(&sorted, ranks);
    let mut owner = vec![0; weights.len()];
    for (k, &i) in order.iter().enumerate() {
        owner[i] = blocks[k];
    }
    let candidate = RankPartition::from_owner(ranks, owner);
    if candidate.imbalance(weights) <= initial.imbalance(weights) {
        candidate
    } else {
        initial.clone()
    }
}

/// Leaves connected by shared active DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafGraph {
    pub weights: Vec<f64>,
    /// Sorted neighbour lists with edge weights, symmetric.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl LeafGraph {
    /// Edge weight = number of active DOFs shared by two leaves.
    pub fn new(mesh: &Mesh, dofs: &DofMap, leaves: &[ElementId], weights: Vec<f64>) -> Self {
        let mut support: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &leaf) in leaves.iter().enumerate() {
            for el in mesh.ancestors(leaf) {
                for &ent in mesh.element(el).entities() {
                    if !dofs.entity_dofs(mesh, ent).is_empty() {
                        support.entry(ent).or_default().push(i);
                    }
                }
            }
        }
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (ent, list) in &support {
            let m = dofs.entity_dofs(mesh, *ent).len() as f64;
            for (k, &a) in list.iter().enumerate() {
                for &b in &list[k + 1..] {
                    if a != b {
                        *edges.entry((a.min(b), a.max(b))).or_default() += m;
                    }
                }
            }
        }
        Self::from_edges(weights, edges.into_iter().map(|((a, b), w)| (a, b, w)))
    }

    pub fn from_edges(weights: Vec<f64>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adjacency = vec![Vec::new(); weights.len()];
        for (a, b, w) in edges {
            if a != b {
                adjacency[a].push((b, w));
                adjacency[b].push((a, w));
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
            list.dedup_by(|x, y| {
                if x.0 == y.0 {
                    y.1 += x.1;
                    true
                } else {
                    false
                }
            });
        }
        Self { weights, adjacency }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Total weight of edges whose endpoints lie on different ranks.
pub fn edge_cut(graph: &LeafGraph, partition: &RankPartition) -> f64 {
    let mut cut = 0.0;
    for (a, list) in graph.adjacency.iter().enumerate() {
        for &(b, w) in list {
            if a < b && partition.rank_of(a) != partition.rank_of(b) {
                cut += w;
            }
        }
    }
    cut
}

/// Imbalance accepted by the graph partitioner.
pub const GRAPH_IMBALANCE: f64 = 1.15;
const REFINEMENT_SWEEPS: usize = 20;

/// Greedy graph growing followed by boundary refinement sweeps; the result is
/// the better of refining the grown partition and refining `initial`.
pub fn improve_graph(initial: &RankPartition, graph: &LeafGraph) -> RankPartition {
    let ranks = initial.ranks();
    if ranks == 1 || graph.is_empty() {
        return initial.clone();
    }
    let grown = refine_boundary(grow(graph, ranks), graph);
    let polished = refine_boundary(initial.clone(), graph);
    let score = |p: &RankPartition| {
        let imb = p.imbalance(&graph.weights);
        (imb > GRAPH_IMBALANCE + 1e-12, edge_cut(graph, p), imb)
    };
    let mut best = initial.clone();
    let mut best_score = score(&best);
    for cand in [grown, polished] {
        let s = score(&cand);
        if s.partial_cmp(&best_score) == Some(std::cmp::Ordering::Less) {
            best = cand;
            best_score = s;
        }
    }
    best
}

fn grow(graph: &LeafGraph, ranks: usize) -> RankPartition {
    let n = graph.len();
    let total: f64 = graph.weights.iter().sum();
    let mut owner = vec![usize::MAX; n];
    let mut assigned_weight = 0.0;
    let mut next_free = 0;
    for r in 0..ranks {
        let goal = total * (r + 1) as f64 / ranks as f64;
        if r + 1 == ranks {
            owner.iter_mut().filter(|o| **o == usize::MAX).for_each(|o| *o = r);
            break;
        }
        // connection strength of unassigned vertices to the growing region
        let mut gain: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            if assigned_weight >= goal {
                break;
            }
            let v = match gain.iter().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0))) {
                Some((&v, _)) => v,
                None => {
                    while next_free < n && owner[next_free] != usize::MAX {
                        next_free += 1;
                    }
                    if next_free == n {
                        break;
                    }
                    next_free
                }
            };
            // stop before overshooting when that lands closer to the goal
            let w = graph.weights[v];
            if assigned_weight + w - goal > goal - assigned_weight && assigned_weight > goal - total / ranks as f64 {
                break;
            }
            gain.remove(&v);
            owner[v] = r;
            assigned_weight += w;
            for &(u, ew) in &graph.adjacency[v] {
                if owner[u] == usize::MAX {
                    *gain.entry(u).or_default() += ew;
                }
            }
        }
    }
    RankPartition::from_owner(ranks, owner)
}

fn refine_boundary(partition: RankPartition, graph: &LeafGraph) -> RankPartition {
    let ranks = partition.ranks();
    let mut owner = partition.owner().to_vec();
    let mut load = partition.rank_weights(&graph.weights);
    let target: f64 = load.iter().sum::<f64>() / ranks as f64;
    let limit = GRAPH_IMBALANCE * target;
    let mut count = vec![0usize; ranks];
    owner.iter().for_each(|&r| count[r] += 1);
    let mut conn = vec![0.0; ranks];
    for _ in 0..REFINEMENT_SWEEPS {
        let mut moved = false;
        for v in 0..graph.len() {
            let a = owner[v];
            if count[a] == 1 {
                continue;
            }
            conn.iter_mut().for_each(|c| *c = 0.0);
            for &(u, w) in &graph.adjacency[v] {
                conn[owner[u]] += w;
            }
            let w = graph.weights[v];
            let mut best: Option<(f64, usize)> = None;
            for b in 0..ranks {
                if b == a || conn[b] == 0.0 {
                    continue;
                }
                let gain = conn[b] - conn[a];
                let fits = load[b] + w <= limit;
                let balances = load[b] + w < load[a];
                let accept = fits && (gain > 0.0 || (gain == 0.0 && balances));
                if accept && best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, b));
                }
            }
            if let Some((_, b)) = best {
                owner[v] = b;
                load[a] -= w;
                load[b] += w;
                count[a] -= 1;
                count[b] += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    RankPartition::from_owner(ranks, owner)
}

/// Number of connected components.
pub fn components(graph: &LeafGraph) -> usize {
    let mut seen = vec![false; graph.len()];
    let mut count = 0;
    for s in 0..graph.len() {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &graph.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    count
}

/// `leaf,element,rank,w_star` rows in leaf-index order.
pub fn partition_csv(leaves: &[ElementId], partition: &RankPartition, weights: &[LeafWeight]) -> String {
    let mut out = String::from("leaf,element,rank,w_star\n");
    for (i, &el) in leaves.iter().enumerate() {
        let _ = writeln!(out, "{i},{el},{},{:.12e}", partition.rank_of(i), weights[i].w_star);
    }
    out
}
