#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use mlhp::basis::{DofMap, OrderField};
use mlhp::distributed::{
    distribute_dofs_contiguous, distribute_dofs_graph, exchange_and_assemble, integrate_rank_system, leaf_free_dofs,
    DistributedSystem, DofOwnership, RankContext,
};
use mlhp::mesh::{BaseMeshSpec, ElementId, Mesh};
use mlhp::partition::{initial_contiguous_partition, RankPartition};
use mlhp::physics::{BoundaryConditions, Constraints, Problem, Segment};
use mlhp::pipeline::{partition_leaves, DofDistribution, Partitioner, RunConfig};
use mlhp::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub mesh: Mesh,
    pub order: OrderField,
    pub problem: Problem,
}

/// Random base mesh, random refinement rounds (at most `max_leaves` leaves),
/// random uniform order in `1..=max_p`.
pub fn random_case(seed: u64, max_leaves: usize, max_p: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lshape = rng.gen_bool(0.5);
    let spec = if lshape {
        BaseMeshSpec::lshape(rng.gen_range(1..=3))
    } else {
        BaseMeshSpec::rectangle([0.0, 0.0], [2.0, 1.0], rng.gen_range(1..=4), rng.gen_range(1..=3))
    };
    let mut mesh = Mesh::new(&spec).unwrap();
    for _ in 0..rng.gen_range(1..=4) {
        let leaves = mesh.active_leaf_elements();
        let marked: Vec<ElementId> = leaves.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        if marked.is_empty() || leaves.len() + 3 * marked.len() > max_leaves {
            break;
        }
        mesh.refine(&marked).unwrap();
    }
    let order = OrderField::Uniform(rng.gen_range(1..=max_p));
    let mut bcs = if lshape {
        BoundaryConditions::lshape()
    } else {
        BoundaryConditions::dirichlet_only(&[Segment::new([0.0, 0.0], [2.0, 0.0])])
    };
    bcs.source = Some(Arc::new(|x| 1.0 + x[0] * x[1]));
    Case { mesh, order, problem: Problem { bcs, ..Default::default() } }
}

/// Serial reference assembly into a sorted map, independent of the CSR code.
pub fn serial_oracle(
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &Problem,
    c: &Constraints,
) -> (BTreeMap<(usize, usize), f64>, Vec<f64>) {
    let mut a = BTreeMap::new();
    let mut b = vec![0.0; c.n_free()];
    for leaf in mesh.active_leaf_elements() {
        let full = problem.leaf_system(mesh, dofs, leaf);
        let n = full.len();
        for i in 0..n {
            let Some(fi) = c.free_index(full.dofs[i]) else { continue };
            b[fi] += full.rhs[i];
            for j in 0..n {
                if let Some(fj) = c.free_index(full.dofs[j]) {
                    *a.entry((fi, fj)).or_insert(0.0) += full.matrix[i * n + j];
                }
            }
        }
    }
    (a, b)
}

pub struct Distributed {
    pub leaves: Vec<ElementId>,
    pub dofs: DofMap,
    pub constraints: Constraints,
    pub partition: RankPartition,
    pub ownership: DofOwnership,
    pub system: DistributedSystem,
    pub element_integrations: usize,
    pub triplets: usize,
}

pub fn distribute(case: &Case, ranks: usize, partitioner: Partitioner, dof_dist: DofDistribution) -> Distributed {
    let mesh = &case.mesh;
    let dofs = DofMap::new(mesh, &case.order).unwrap();
    let constraints = Constraints::new(mesh, &dofs, &case.problem.bcs).unwrap();
    let leaves = mesh.active_leaf_elements();
    let config = RunConfig { ranks, partitioner, dof_dist, order: case.order.clone(), ..Default::default() };
    let (partition, _, _) = partition_leaves(&config, mesh, &dofs, &case.problem, &leaves);
    let mut contexts = RankContext::all(&partition);
    let systems: Vec<_> = contexts
        .iter()
        .map(|ctx| integrate_rank_system(ctx, mesh, &dofs, &case.problem, &constraints, &leaves))
        .collect();
    let ownership = match dof_dist {
        DofDistribution::Contiguous => distribute_dofs_contiguous(constraints.n_free(), ranks),
        DofDistribution::Graph => {
            let lists = leaf_free_dofs(mesh, &dofs, &constraints, &leaves, Execution::Sequential);
            distribute_dofs_graph(&lists, &partition, constraints.n_free()).unwrap()
        }
    };
    let element_integrations = systems.iter().map(|s| s.element_integrations).sum();
    let triplets = systems.iter().map(|s| s.triplet_count()).sum();
    let system = exchange_and_assemble(&mut contexts, &systems, &ownership, Execution::Sequential).unwrap();
    Distributed { leaves, dofs, constraints, partition, ownership, system, element_integrations, triplets }
}

/// Largest row-relative deviation between the gathered distributed matrix and
/// the oracle.
pub fn max_row_deviation(system: &DistributedSystem, oracle: &BTreeMap<(usize, usize), f64>) -> f64 {
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); system.n];
    for b in &system.blocks {
        for (i, &row) in b.owned.iter().enumerate() {
            let range = b.matrix.row_ptr[i]..b.matrix.row_ptr[i + 1];
            for e in range {
                rows[row].insert(b.matrix.col_idx[e], b.matrix.values[e]);
            }
        }
    }
    let mut expected: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); system.n];
    for (&(i, j), &v) in oracle {
        expected[i].insert(j, v);
    }
    let mut worst = 0.0f64;
    for (got, want) in rows.iter().zip(&expected) {
        let scale = want.values().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for (&j, &v) in want {
            worst = worst.max((got.get(&j).copied().unwrap_or(0.0) - v).abs() / scale);
        }
        for (&j, &v) in got {
            if !want.contains_key(&j) {
                worst = worst.max(v.abs() / scale);
            }
        }
    }
    worst
}

/// Plain unpreconditioned CG on a sparse map, used as an oracle.
pub fn reference_cg(a: &BTreeMap<(usize, usize), f64>, b: &[f64], tol: f64) -> Vec<f64> {
    let n = b.len();
    let mul = |x: &[f64]| {
        let mut y = vec![0.0; n];
        for (&(i, j), &v) in a {
            y[i] += v * x[j];
        }
        y
    };
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let bn = rr.sqrt();
    for _ in 0..50 * n.max(1) {
        if rr.sqrt() <= tol * bn {
            break;
        }
        let q = mul(&p);
        let alpha = rr / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let next = dot(&r, &r);
        for i in 0..n {
            p[i] = r[i] + next / rr * p[i];
        }
        rr = next;
    }
    x
}

/// `sqrt(e^T A e)` for `e = x - y`.
pub fn energy_norm_diff(a: &BTreeMap<(usize, usize), f64>, x: &[f64], y: &[f64]) -> f64 {
    let e: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    a.iter().map(|(&(i, j), &v)| e[i] * v * e[j]).sum::<f64>().max(0.0).sqrt()
}

pub fn run_a_mesh() -> Mesh {
    let mut mesh = Mesh::new(&BaseMeshSpec::lshape(16)).unwrap();
    mesh.refine_towards([0.0, 0.0], 5).unwrap();
    mesh
}

pub fn contiguous(leaves: usize, ranks: usize) -> RankPartition {
    initial_contiguous_partition(leaves, ranks)
}
