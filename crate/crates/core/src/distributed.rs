//! Simulated multi-rank runtime: rank-local integration, DOF ownership,
//! triplet exchange, owner-row assembly and a Jacobi-preconditioned CG.
//!
//! Ranks never share mutable state. Everything one rank learns from another
//! travels through an [`ExchangePacket`] or a rank-ordered reduction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basis::DofMap;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh::{ElementId, Mesh};
use crate::partition::RankPartition;
use crate::physics::{Constraints, Problem};
use crate::sparse::{CsrMatrix, Triplet};

/// Owner rank of every free DOF.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofOwnership {
    ranks: usize,
    owner: Vec<usize>,
    owned: Vec<Vec<usize>>,
}

impl DofOwnership {
    pub fn from_owner(ranks: usize, owner: Vec<usize>) -> Self {
        let mut owned = vec![Vec::new(); ranks];
        for (d, &r) in owner.iter().enumerate() {
            owned[r].push(d);
        }
        Self { ranks, owner, owned }
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

    pub fn rank_of(&self, dof: usize) -> usize {
        self.owner[dof]
    }

    /// Owned free DOFs of a rank, ascending.
    pub fn owned(&self, rank: usize) -> &[usize] {
        &self.owned[rank]
    }
}

/// Rank `r` owns the free-index block `[floor(rn/P), floor((r+1)n/P))`.
pub fn distribute_dofs_contiguous(n_free: usize, ranks: usize) -> DofOwnership {
    let mut owner = vec![0; n_free];
    for r in 0..ranks {
        for o in &mut owner[r * n_free / ranks..(r + 1) * n_free / ranks] {
            *o = r;
        }
    }
    DofOwnership::from_owner(ranks, owner)
}

/// Each free DOF goes to the rank holding most leaves of its support, the
/// lower rank on ties. `leaf_dofs[i]` lists the free DOFs of leaf index `i`.
pub fn distribute_dofs_graph(
    leaf_dofs: &[Vec<usize>],
    partition: &RankPartition,
    n_free: usize,
) -> Result<DofOwnership> {
    let ranks = partition.ranks();
    let mut counts = vec![0u32; n_free * ranks];
    for (leaf, list) in leaf_dofs.iter().enumerate() {
        let r = partition.rank_of(leaf);
        for &d in list {
            counts[d * ranks + r] += 1;
        }
    }
    let mut owner = Vec::with_capacity(n_free);
    for d in 0..n_free {
        let row = &counts[d * ranks..(d + 1) * ranks];
        let mut best = 0;
        for r in 1..ranks {
            if row[r] > row[best] {
                best = r;
            }
        }
        if row[best] == 0 {
            return Err(Error::EmptySupport(d));
        }
        owner.push(best);
    }
    Ok(DofOwnership::from_owner(ranks, owner))
}

/// Free DOFs of each leaf, in leaf-index order.
pub fn leaf_free_dofs(
    mesh: &Mesh,
    dofs: &DofMap,
    constraints: &Constraints,
    leaves: &[ElementId],
    exec: Execution,
) -> Vec<Vec<usize>> {
    exec.map(leaves, |&leaf| {
        dofs.leaf_basis(mesh, leaf).shapes.iter().filter_map(|s| constraints.free_index(s.dof)).collect()
    })
}

/// State private to one simulated rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankContext {
    pub rank: usize,
    pub ranks: usize,
    /// Leaf indices of this rank's integration domains, ascending.
    pub leaves: Vec<usize>,
    pub owned: Vec<usize>,
    pub inbox: Vec<ExchangePacket>,
    pub outbox: Vec<ExchangePacket>,
}

impl RankContext {
    pub fn new(rank: usize, partition: &RankPartition) -> Self {
        Self {
            rank,
            ranks: partition.ranks(),
            leaves: partition.leaves(rank).to_vec(),
            owned: Vec::new(),
            inbox: Vec::new(),
            outbox: Vec::new(),
        }
    }

    /// One context per rank.
    pub fn all(partition: &RankPartition) -> Vec<Self> {
        (0..partition.ranks()).map(|r| Self::new(r, partition)).collect()
    }
}

/// A rank's sum of element systems over its own leaves, restricted to the
/// free DOFs its leaves touch.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateSystem {
    pub rank: usize,
    /// Global free indices present on this rank, ascending; local index = position.
    pub dofs: Vec<usize>,
    /// Local-by-local matrix.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub element_integrations: usize,
}

impl IntermediateSystem {
    pub fn triplet_count(&self) -> usize {
        self.matrix.nnz()
    }

    /// Entries in global free numbering, row by row.
    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.dofs.len()).flat_map(move |i| {
            let (cols, vals) = self.matrix.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (self.dofs[i], self.dofs[c], v))
        })
    }
}

/// Integrates every leaf of the rank once and sums in leaf order.
pub fn integrate_rank_system(
    ctx: &RankContext,
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &Problem,
    constraints: &Constraints,
    leaves: &[ElementId],
) -> IntermediateSystem {
    let systems: Vec<_> =
        ctx.leaves.iter().map(|&i| constraints.reduce(&problem.leaf_system(mesh, dofs, leaves[i]))).collect();
    let mut present: Vec<usize> = systems.iter().flat_map(|s| s.dofs.iter().copied()).collect();
    present.sort_unstable();
    present.dedup();
    let local: HashMap<usize, usize> = present.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut triplets = Vec::with_capacity(systems.iter().map(|s| s.len() * s.len()).sum());
    let mut rhs = vec![0.0; present.len()];
    for s in &systems {
        let idx: Vec<usize> = s.dofs.iter().map(|g| local[g]).collect();
        for (a, &i) in idx.iter().enumerate() {
            rhs[i] += s.rhs[a];
            for (b, &j) in idx.iter().enumerate() {
                triplets.push((i, j, s.matrix[a * idx.len() + b]));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(present.len(), present.len(), &triplets);
    IntermediateSystem { rank: ctx.rank, dofs: present, matrix, rhs, element_integrations: systems.len() }
}

/// Non-local part of an intermediate system addressed to the row owner.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExchangePacket {
    pub from: usize,
    pub to: usize,
    pub triplets: Vec<Triplet>,
    pub rhs: Vec<(usize, f64)>,
}

/// Splits an intermediate system into kept owned rows (`to == from`) and
/// one packet per destination rank (empty packets included).
pub fn split_intermediate(sys: &IntermediateSystem, ownership: &DofOwnership) -> Vec<ExchangePacket> {
    let ranks = ownership.ranks();
    let mut out: Vec<ExchangePacket> =
        (0..ranks).map(|to| ExchangePacket { from: sys.rank, to, ..Default::default() }).collect();
    for (i, &row) in sys.dofs.iter().enumerate() {
        let dest = &mut out[ownership.rank_of(row)];
        let (cols, vals) = sys.matrix.row(i);
        dest.triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (row, sys.dofs[c], v)));
        dest.rhs.push((row, sys.rhs[i]));
    }
    out
}

/// One rank's owned rows after assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct RankBlock {
    pub rank: usize,
    pub owned: Vec<usize>,
    /// Local rows by global free columns.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Non-owned columns referenced by the owned rows, ascending.
    pub ghosts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedSystem {
    pub n: usize,
    pub blocks: Vec<RankBlock>,
    /// Triplets each rank sent to other ranks.
    pub sent_triplets: Vec<usize>,
}

impl DistributedSystem {
    /// Splits an assembled global system into owner-row blocks, as if it had
    /// been assembled under `ownership`. No triplets are counted as sent.
    pub fn from_global(matrix: &CsrMatrix, rhs: &[f64], ownership: &DofOwnership) -> Self {
        let blocks = (0..ownership.ranks())
            .map(|rank| {
                let owned = ownership.owned(rank).to_vec();
                let mut triplets = Vec::new();
                for (i, &g) in owned.iter().enumerate() {
                    let (cols, vals) = matrix.row(g);
                    triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (i, c, v)));
                }
                let local = CsrMatrix::from_triplets(owned.len(), ownership.len(), &triplets);
                let mut ghosts: Vec<usize> =
                    local.col_idx.iter().copied().filter(|&c| ownership.rank_of(c) != rank).collect();
                ghosts.sort_unstable();
                ghosts.dedup();
                let rhs = owned.iter().map(|&g| rhs[g]).collect();
                RankBlock { rank, owned, matrix: local, rhs, ghosts }
            })
            .collect();
        DistributedSystem { n: ownership.len(), blocks, sent_triplets: vec![0; ownership.ranks()] }
    }

    /// Reassembles the owned blocks into one global matrix and right-hand side.
    pub fn gather(&self) -> (CsrMatrix, Vec<f64>) {
        let mut triplets = Vec::new();
        let mut rhs = vec![0.0; self.n];
        for b in &self.blocks {
            for (i, &row) in b.owned.iter().enumerate() {
                let (cols, vals) = b.matrix.row(i);
                triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (row, c, v)));
                rhs[row] = b.rhs[i];
            }
        }
        (CsrMatrix::from_triplets(self.n, self.n, &triplets), rhs)
    }
}

/// Builds a rank's owned block from its inbox (one packet per source, own
/// contribution included), checking that every row is owned by the receiver.
pub fn assemble_owned(rank: usize, inbox: &[ExchangePacket], ownership: &DofOwnership) -> Result<RankBlock> {
    let owned = ownership.owned(rank).to_vec();
    let n = ownership.len();
    let mut local = vec![usize::MAX; n];
    for (i, &g) in owned.iter().enumerate() {
        local[g] = i;
    }
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; owned.len()];
    let mut sources: Vec<&ExchangePacket> = inbox.iter().collect();
    sources.sort_by_key(|p| p.from);
    for p in sources {
        for &(row, col, v) in &p.triplets {
            if p.to != rank || ownership.rank_of(row) != rank {
                return Err(Error::ProtocolViolation { from: p.from, to: rank, row });
            }
            triplets.push((local[row], col, v));
        }
        for &(row, v) in &p.rhs {
            if p.to != rank || ownership.rank_of(row) != rank {
                return Err(Error::ProtocolViolation { from: p.from, to: rank, row });
            }
            rhs[local[row]] += v;
        }
    }
    let matrix = CsrMatrix::from_triplets(owned.len(), n, &triplets);
    let mut ghosts: Vec<usize> = matrix.col_idx.iter().copied().filter(|&c| ownership.rank_of(c) != rank).collect();
    ghosts.sort_unstable();
    ghosts.dedup();
    Ok(RankBlock { rank, owned, matrix, rhs, ghosts })
}

/// Splits every intermediate system into the rank outboxes, performs one
/// all-to-all into the inboxes and assembles the owned rows on each rank.
pub fn exchange_and_assemble(
    contexts: &mut [RankContext],
    systems: &[IntermediateSystem],
    ownership: &DofOwnership,
    exec: Execution,
) -> Result<DistributedSystem> {
    exec.for_each_mut(contexts, |r, ctx| {
        ctx.owned = ownership.owned(r).to_vec();
        ctx.outbox = split_intermediate(&systems[r], ownership);
    });
    let sent_triplets =
        contexts.iter().map(|c| c.outbox.iter().filter(|p| p.to != p.from).map(|p| p.triplets.len()).sum()).collect();
    for r in 0..contexts.len() {
        for p in std::mem::take(&mut contexts[r].outbox) {
            let to = p.to;
            contexts[to].inbox.push(p);
        }
    }
    let blocks = exec.map(contexts, |ctx| assemble_owned(ctx.rank, &ctx.inbox, ownership));
    contexts.iter_mut().for_each(|c| c.inbox.clear());
    let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DistributedSystem { n: ownership.len(), blocks, sent_triplets })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgOutcome {
    /// Solution over the free DOFs.
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Where each column of a block's matrix is read from: owned slot or ghost slot.
struct Halo {
    /// Column position in `[owned | ghosts]` for each CSR entry.
    entry_slot: Vec<usize>,
    /// `(rank, local index)` supplying each ghost.
    sources: Vec<(usize, usize)>,
}

fn build_halos(system: &DistributedSystem) -> Vec<Halo> {
    let mut home = vec![(0, 0); system.n];
    for b in &system.blocks {
        for (i, &g) in b.owned.iter().enumerate() {
            home[g] = (b.rank, i);
        }
    }
    system
        .blocks
        .iter()
        .map(|b| {
            let entry_slot = b
                .matrix
                .col_idx
                .iter()
                .map(|&c| {
                    let (r, i) = home[c];
                    if r == b.rank {
                        i
                    } else {
                        b.owned.len() + b.ghosts.binary_search(&c).expect("ghost column registered")
                    }
                })
                .collect();
            Halo { entry_slot, sources: b.ghosts.iter().map(|&g| home[g]).collect() }
        })
        .collect()
}

/// Global dot product. Ranks form their owned products; the reduction places
/// them by global DOF and sums in index order, so the result is bitwise the
/// same for every rank count.
fn reduce(exec: Execution, blocks: &[RankBlock], n: usize, parts: &[Vec<f64>], other: &[Vec<f64>]) -> f64 {
    let products =
        exec.map_range(parts.len(), |r| parts[r].iter().zip(&other[r]).map(|(a, b)| a * b).collect::<Vec<f64>>());
    let mut ordered = vec![0.0; n];
    for (b, prod) in blocks.iter().zip(products) {
        for (&g, v) in b.owned.iter().zip(prod) {
            ordered[g] = v;
        }
    }
    ordered.iter().sum()
}

/// Jacobi-preconditioned CG on the distributed system, stopping at relative
/// residual `tol`.
pub fn parallel_cg(system: &DistributedSystem, tol: f64, max_iter: usize, exec: Execution) -> Result<CgOutcome> {
    let blocks = &system.blocks;
    let halos = build_halos(system);
    let inv_diag: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| {
            b.owned
                .iter()
                .enumerate()
                .map(|(i, &g)| {
                    let d = b.matrix.get(i, g);
                    if d != 0.0 {
                        1.0 / d
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();
    let zeros = || blocks.iter().map(|b| vec![0.0; b.owned.len()]).collect::<Vec<_>>();
    let mut x = zeros();
    let mut r: Vec<Vec<f64>> = blocks.iter().map(|b| b.rhs.clone()).collect();
    let bnorm = reduce(exec, blocks, system.n, &r, &r).sqrt();
    let gather = |x: Vec<Vec<f64>>| {
        let mut out = vec![0.0; system.n];
        for (b, xs) in blocks.iter().zip(x) {
            for (&g, v) in b.owned.iter().zip(xs) {
                out[g] = v;
            }
        }
        out
    };
    if bnorm == 0.0 {
        return Ok(CgOutcome { solution: vec![0.0; system.n], iterations: 0, residual: 0.0, history: vec![] });
    }
    let precondition = |r: &[Vec<f64>]| -> Vec<Vec<f64>> {
        exec.map_range(blocks.len(), |k| r[k].iter().zip(&inv_diag[k]).map(|(a, d)| a * d).collect())
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = reduce(exec, blocks, system.n, &r, &z);
    let mut history = Vec::new();
    for it in 1..=max_iter {
        // halo exchange: every rank reads the owners' current search direction
        let q: Vec<Vec<f64>> = exec.map_range(blocks.len(), |k| {
            let b = &blocks[k];
            let h = &halos[k];
            let mut ext = p[k].clone();
            ext.extend(h.sources.iter().map(|&(r, i)| p[r][i]));
            (0..b.owned.len())
                .map(|i| {
                    let range = b.matrix.row_ptr[i]..b.matrix.row_ptr[i + 1];
                    range.map(|e| b.matrix.values[e] * ext[h.entry_slot[e]]).sum()
                })
                .collect()
        });
        let pq = reduce(exec, blocks, system.n, &p, &q);
        let alpha = rz / pq;
        for k in 0..blocks.len() {
            for i in 0..x[k].len() {
                x[k][i] += alpha * p[k][i];
                r[k][i] -= alpha * q[k][i];
            }
        }
        let res = reduce(exec, blocks, system.n, &r, &r).sqrt() / bnorm;
        history.push(res);
        if res <= tol {
            return Ok(CgOutcome { solution: gather(x), iterations: it, residual: res, history });
        }
        if !res.is_finite() {
            break;
        }
        z = precondition(&r);
        let rz_new = reduce(exec, blocks, system.n, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..blocks.len() {
            for i in 0..p[k].len() {
                p[k][i] = z[k][i] + beta * p[k][i];
            }
        }
    }
    let residual = history.last().copied().unwrap_or(1.0);
    Err(Error::NotConverged { iterations: history.len(), residual, history })
}

/// Serial reference: every leaf into one system over the free DOFs.
pub fn assemble_serial(
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &Problem,
    constraints: &Constraints,
) -> (CsrMatrix, Vec<f64>) {
    let n = constraints.n_free();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for leaf in mesh.active_leaf_elements() {
        let s = constraints.reduce(&problem.leaf_system(mesh, dofs, leaf));
        for (a, &i) in s.dofs.iter().enumerate() {
            rhs[i] += s.rhs[a];
            for (b, &j) in s.dofs.iter().enumerate() {
                triplets.push((i, j, s.matrix[a * s.len() + b]));
            }
        }
    }
    (CsrMatrix::from_triplets(n, n, &triplets), rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::OrderField;
    use crate::mesh::BaseMeshSpec;
    use crate::partition::initial_contiguous_partition;
    use crate::physics::{BoundaryConditions, Segment};

    #[test]
    fn contiguous_ownership() {
        let o = distribute_dofs_contiguous(10, 2);
        assert_eq!(o.owned(0), &[0, 1, 2, 3, 4]);
        assert_eq!(o.owned(1), &[5, 6, 7, 8, 9]);
        assert_eq!(distribute_dofs_contiguous(5, 1).owned(0).len(), 5);
    }

    #[test]
    fn majority_and_tie_break() {
        // dof 0 on leaves at ranks {0,0,1}; dof 1 on leaves at ranks {2,1}
        let part = RankPartition::from_owner(3, vec![0, 0, 1, 2]);
        let leaf_dofs = vec![vec![0], vec![0], vec![0, 1], vec![1]];
        let o = distribute_dofs_graph(&leaf_dofs, &part, 2).unwrap();
        assert_eq!(o.rank_of(0), 0);
        assert_eq!(o.rank_of(1), 1);
        assert_eq!(distribute_dofs_graph(&leaf_dofs, &part, 3), Err(Error::EmptySupport(2)));
    }

    fn diagonal_system(values: &[f64], ranks: usize) -> DistributedSystem {
        let n = values.len();
        let own = distribute_dofs_contiguous(n, ranks);
        let blocks = (0..ranks)
            .map(|r| {
                let owned = own.owned(r).to_vec();
                let t: Vec<Triplet> = owned.iter().enumerate().map(|(i, &g)| (i, g, 1.0)).collect();
                RankBlock {
                    rank: r,
                    rhs: owned.iter().map(|&g| values[g]).collect(),
                    matrix: CsrMatrix::from_triplets(owned.len(), n, &t),
                    owned,
                    ghosts: vec![],
                }
            })
            .collect();
        DistributedSystem { n, blocks, sent_triplets: vec![0; ranks] }
    }

    #[test]
    fn identity_in_one_iteration() {
        let b = [1.0, -2.0, 3.5, 0.25, 7.0];
        let out = parallel_cg(&diagonal_system(&b, 2), 1e-12, 10, Execution::Sequential).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.solution, b.to_vec());
        let zero = parallel_cg(&diagonal_system(&[0.0; 3], 1), 1e-12, 10, Execution::Sequential).unwrap();
        assert_eq!(zero.iterations, 0);
    }

    #[test]
    fn non_convergence_carries_history() {
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 4, 4)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(3)).unwrap();
        let mut bcs = BoundaryConditions::dirichlet_only(&[Segment::new([0.0, 0.0], [1.0, 0.0])]);
        bcs.source = Some(std::sync::Arc::new(|_| 1.0));
        let problem = Problem { bcs, ..Default::default() };
        let c = Constraints::new(&mesh, &dofs, &problem.bcs).unwrap();
        let leaves = mesh.active_leaf_elements();
        let part = initial_contiguous_partition(leaves.len(), 2);
        let mut ctxs = RankContext::all(&part);
        let systems: Vec<_> =
            ctxs.iter().map(|ctx| integrate_rank_system(ctx, &mesh, &dofs, &problem, &c, &leaves)).collect();
        let sys = exchange_and_assemble(
            &mut ctxs,
            &systems,
            &distribute_dofs_contiguous(c.n_free(), 2),
            Execution::Sequential,
        )
        .unwrap();
        match parallel_cg(&sys, 1e-14, 3, Execution::Sequential) {
            Err(Error::NotConverged { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_system_same_iterates_for_any_rank_count() {
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 5, 3)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(3)).unwrap();
        let mut bcs = BoundaryConditions::dirichlet_only(&[Segment::new([0.0, 0.0], [1.0, 0.0])]);
        bcs.source = Some(std::sync::Arc::new(|x| 1.0 + x[0]));
        let problem = Problem { bcs, ..Default::default() };
        let c = Constraints::new(&mesh, &dofs, &problem.bcs).unwrap();
        let (a, b) = assemble_serial(&mesh, &dofs, &problem, &c);
        let solve = |ranks| {
            let sys = DistributedSystem::from_global(&a, &b, &distribute_dofs_contiguous(c.n_free(), ranks));
            parallel_cg(&sys, 1e-12, 1000, Execution::Sequential).unwrap()
        };
        let one = solve(1);
        for ranks in [2, 3, 7] {
            let other = solve(ranks);
            assert_eq!(other.iterations, one.iterations);
            assert_eq!(other.solution, one.solution);
        }
    }

    #[test]
    fn misaddressed_packet_is_rejected() {
        let own = distribute_dofs_contiguous(4, 2);
        let bad = ExchangePacket { from: 0, to: 1, triplets: vec![(0, 0, 1.0)], rhs: vec![] };
        assert_eq!(assemble_owned(1, &[bad], &own), Err(Error::ProtocolViolation { from: 0, to: 1, row: 0 }));
    }

    #[test]
    fn single_rank_sends_nothing() {
        let mesh = Mesh::new(&BaseMeshSpec::lshape(2)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(2)).unwrap();
        let problem = Problem { bcs: BoundaryConditions::lshape(), ..Default::default() };
        let c = Constraints::new(&mesh, &dofs, &problem.bcs).unwrap();
        let leaves = mesh.active_leaf_elements();
        let part = initial_contiguous_partition(leaves.len(), 1);
        let mut ctx = [RankContext::new(0, &part)];
        let sys = integrate_rank_system(&ctx[0], &mesh, &dofs, &problem, &c, &leaves);
        assert_eq!(sys.element_integrations, leaves.len());
        let dist =
            exchange_and_assemble(&mut ctx, &[sys], &distribute_dofs_contiguous(c.n_free(), 1), Execution::Sequential)
                .unwrap();
        assert_eq!(dist.sent_triplets, vec![0]);
        let (a, b) = dist.gather();
        let (sa, sb) = assemble_serial(&mesh, &dofs, &problem, &c);
        assert_eq!(a, sa);
        assert_eq!(b, sb);
    }

    #[test]
    fn empty_rank_has_empty_system() {
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 1, 1)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(1)).unwrap();
        let c = Constraints::none(dofs.total());
        let part = initial_contiguous_partition(1, 2);
        let ctx = RankContext::new(0, &part);
        assert!(ctx.leaves.is_empty());
        let sys = integrate_rank_system(&ctx, &mesh, &dofs, &Problem::default(), &c, &[0]);
        assert_eq!(sys.triplet_count(), 0);
        assert_eq!(sys.element_integrations, 0);
    }
}
