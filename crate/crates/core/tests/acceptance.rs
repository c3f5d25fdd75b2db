//! Acceptance suite: one line per criterion, non-zero exit if a hard criterion
//! fails. The scaling criterion only warns.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use common::{distribute, max_row_deviation, random_case, run_a_mesh, serial_oracle};
use mlhp::basis::{DofMap, OrderField};
use mlhp::distributed::{assemble_serial, distribute_dofs_graph, leaf_free_dofs, parallel_cg, DistributedSystem};
use mlhp::mesh::{BaseMeshSpec, EntityKind, Mesh, Point};
use mlhp::partition::{compute_leaf_weights, improve_geometric, initial_contiguous_partition};
use mlhp::physics::{Constraints, Problem};
use mlhp::pipeline::{
    alpha_area, partition_leaves, quarter_disk, run_pipeline, scaling_study, DofDistribution, Partitioner, RunConfig,
};
use mlhp::quadrature::EmbeddedDomain;
use mlhp::Execution;

enum Verdict {
    Pass,
    Fail,
    Warn,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome { verdict: if ok { Verdict::Pass } else { Verdict::Fail }, detail }
}

fn leaf_counts() -> Outcome {
    let t = Instant::now();
    let a = run_a_mesh().leaf_count();
    let mut b = Mesh::new(&BaseMeshSpec::lshape(128)).unwrap();
    b.refine_towards([0.0, 0.0], 5).unwrap();
    let b = b.leaf_count();
    let secs = t.elapsed().as_secs_f64();
    check(a == 813 && b == 49_197 && secs < 5.0, format!("run A {a} leaves, run B {b} leaves, {secs:.2} s"))
}

/// Active DOFs of a corner-refined L-shape counted entity by entity: the base
/// grid, plus per refinement level the 3-element corner patch of four children
/// each (5 interior nodes, 16 interior edges, 12 faces), minus what the next
/// level covers (3 faces and the 2 edges interior to the corner triple).
fn corner_refined_dofs(n: usize, steps: usize, p: usize) -> usize {
    let m = p - 1;
    let nodes = 3 * n * n + 4 * n + 1;
    let edges = 6 * n * n + 4 * n;
    let faces = 3 * n * n;
    let base = nodes + m * edges + m * m * faces;
    let patch = 5 + 16 * m + 12 * m * m;
    let covered = 3 * m * m + 2 * m;
    base + steps * patch - steps * covered
}

const RUN_B_DOFS: usize = 4_924_621;

fn dof_count() -> Outcome {
    let t = Instant::now();
    let mut mesh = Mesh::new(&BaseMeshSpec::lshape(128)).unwrap();
    mesh.refine_towards([0.0, 0.0], 5).unwrap();
    let dofs = DofMap::new(&mesh, &OrderField::Uniform(10)).unwrap();
    let counted: usize = mesh
        .entities()
        .filter(|(_, e)| e.active && e.is_alive())
        .map(|(_, e)| match e.kind {
            EntityKind::Node => 1,
            EntityKind::Edge => 9,
            EntityKind::Face => 81,
        })
        .sum();
    let oracle = corner_refined_dofs(128, 5, 10);
    let rel = (dofs.total() as f64 - 5.0e6).abs() / 5.0e6;
    let secs = t.elapsed().as_secs_f64();
    check(
        dofs.total() == RUN_B_DOFS && counted == oracle && oracle == RUN_B_DOFS && rel <= 0.02 && secs < 30.0,
        format!("{} DOFs ({:.2}% from 5e6), entity oracle {oracle}, {secs:.1} s", dofs.total(), 100.0 * rel),
    )
}

fn ghost_free_assembly() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut redundant = 0usize;
    let mut cases = 0;
    for seed in 0..20u64 {
        let case = random_case(1000 + seed, 1000, 4);
        let dofs = DofMap::new(&case.mesh, &case.order).unwrap();
        let c = Constraints::new(&case.mesh, &dofs, &case.problem.bcs).unwrap();
        let (oracle, _) = serial_oracle(&case.mesh, &dofs, &case.problem, &c);
        for (k, ranks) in [1usize, 2, 3, 4, 8].into_iter().enumerate() {
            let partitioner = [Partitioner::Contiguous, Partitioner::Sfc, Partitioner::Graph][(seed as usize + k) % 3];
            let dof_dist = [DofDistribution::Contiguous, DofDistribution::Graph][(seed as usize + k) % 2];
            let d = distribute(&case, ranks, partitioner, dof_dist);
            worst = worst.max(max_row_deviation(&d.system, &oracle));
            redundant += d.element_integrations.abs_diff(d.leaves.len());
            cases += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-12 && redundant == 0 && secs < 120.0,
        format!(
            "{cases} mesh/rank cases, worst row deviation {worst:.1e}, integration surplus {redundant}, {secs:.1} s"
        ),
    )
}

fn dof_distribution() -> Outcome {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut ties = 0;
    let mut partition_ok = true;
    for seed in 0..20u64 {
        let case = random_case(2000 + seed, 600, 3);
        let dofs = DofMap::new(&case.mesh, &case.order).unwrap();
        let c = Constraints::new(&case.mesh, &dofs, &case.problem.bcs).unwrap();
        let leaves = case.mesh.active_leaf_elements();
        let ranks = 2 + seed as usize % 5;
        // scatter leaves round-robin so many DOFs have mixed support
        let partition = mlhp::partition::RankPartition::from_owner(
            ranks,
            (0..leaves.len()).map(|i| (i * 7 + i / 3) % ranks).collect(),
        );
        let lists = leaf_free_dofs(&case.mesh, &dofs, &c, &leaves, Execution::Sequential);
        let own = distribute_dofs_graph(&lists, &partition, c.n_free()).unwrap();
        let mut support: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &leaf) in leaves.iter().enumerate() {
            for s in &dofs.leaf_basis(&case.mesh, leaf).shapes {
                if let Some(f) = c.free_index(s.dof) {
                    support.entry(f).or_insert_with(|| vec![0; ranks])[partition.rank_of(i)] += 1;
                }
            }
        }
        for (&dof, counts) in &support {
            let best = *counts.iter().max().unwrap();
            let expected = counts.iter().position(|&x| x == best).unwrap();
            if counts.iter().filter(|&&x| x == best).count() > 1 {
                ties += 1;
            }
            if own.rank_of(dof) != expected {
                mismatches += 1;
            }
        }
        let mut seen = vec![0; c.n_free()];
        for r in 0..ranks {
            own.owned(r).iter().for_each(|&d| seen[d] += 1);
        }
        partition_ok &= support.len() == c.n_free() && seen.iter().all(|&s| s == 1);
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        mismatches == 0 && partition_ok && ties > 0 && secs < 30.0,
        format!("20 meshes: {mismatches} owners differ from the majority oracle, {ties} ties checked, ownership partitions free DOFs {partition_ok}, {secs:.1} s"),
    )
}

fn communication_ordering() -> Outcome {
    let t = Instant::now();
    let mesh = run_a_mesh();
    let case = common::Case {
        mesh,
        order: OrderField::Uniform(4),
        problem: Problem { bcs: mlhp::physics::BoundaryConditions::lshape(), ..Default::default() },
    };
    let sent = |dist| distribute(&case, 4, Partitioner::Sfc, dist).system.sent_triplets.iter().sum::<usize>();
    let graph = sent(DofDistribution::Graph);
    let contiguous = sent(DofDistribution::Contiguous);
    let secs = t.elapsed().as_secs_f64();
    check(
        graph <= contiguous && secs < 60.0,
        format!("sent triplets graph {graph} vs contiguous {contiguous}, {secs:.1} s"),
    )
}

/// Energy errors of the p=2 corner study, frozen after the first verified run.
const LSHAPE_P2_ERRORS: [f64; 6] =
    [2.461699038156e-2, 1.563330396393e-2, 1.004840599041e-2, 6.636055124930e-3, 4.630106241848e-3, 3.530906808685e-3];

fn convergence() -> Outcome {
    let t = Instant::now();
    let graded = run_pipeline(&RunConfig { ranks: 2, ..Default::default() }).unwrap();
    let uniform = run_pipeline(&RunConfig { res: 32, steps: 0, ranks: 2, ..Default::default() }).unwrap();
    let e: Vec<f64> = graded.reports.iter().map(|r| r.energy_error.unwrap()).collect();
    let n: Vec<f64> = graded.reports.iter().map(|r| r.dofs as f64).collect();
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    let frozen = e.iter().zip(LSHAPE_P2_ERRORS).all(|(a, b)| ((a - b) / b).abs() < 1e-6);
    let slopes: Vec<f64> = (1..e.len()).map(|k| (e[k] / e[k - 1]).ln() / (n[k] / n[k - 1]).ln()).collect();
    let ur = &uniform.reports[0];
    let uniform_slope = (ur.energy_error.unwrap() / e[0]).ln() / (ur.dofs as f64 / n[0]).ln();
    let steeper = slopes.iter().all(|&s| s < uniform_slope);
    let secs = t.elapsed().as_secs_f64();
    check(
        decreasing && frozen && steeper && secs < 120.0,
        format!(
            "errors {:.3e} .. {:.3e} decreasing {decreasing}, frozen {frozen}, graded slopes {:.1} .. {:.1} vs uniform {:.2}, {secs:.1} s",
            e[0],
            e[5],
            slopes.iter().copied().fold(f64::INFINITY, f64::min),
            slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            uniform_slope
        ),
    )
}

fn fcm_area() -> Outcome {
    let t = Instant::now();
    let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 1, 1)).unwrap();
    let domain = EmbeddedDomain::new(quarter_disk(), 0.0);
    let errors: Vec<f64> =
        (0..=6).map(|d| (alpha_area(&mesh, &[0], &domain, d, Execution::Sequential) - FRAC_PI_4).abs()).collect();
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let secs = t.elapsed().as_secs_f64();
    check(
        monotone && errors[6] < 2e-3 && secs < 30.0,
        format!("|area - pi/4| from {:.2e} (depth 0) to {:.2e} (depth 6), monotone {monotone}", errors[0], errors[6]),
    )
}

/// One assembled run-A system, blocked by the majority-owner distribution of
/// each rank count and solved there.
fn parallel_solve() -> Outcome {
    let t = Instant::now();
    let config = RunConfig { order: OrderField::Uniform(4), ..Default::default() };
    let problem = config.problem();
    let mesh = run_a_mesh();
    let dofs = DofMap::new(&mesh, &config.order).unwrap();
    let c = Constraints::new(&mesh, &dofs, &problem.bcs).unwrap();
    let (a, b) = assemble_serial(&mesh, &dofs, &problem, &c);
    let leaves = mesh.active_leaf_elements();
    let lists = leaf_free_dofs(&mesh, &dofs, &c, &leaves, Execution::Sequential);
    let mut runs = Vec::new();
    for ranks in [1usize, 2, 4] {
        let cfg = RunConfig { ranks, ..config.clone() };
        let (partition, _, _) = partition_leaves(&cfg, &mesh, &dofs, &problem, &leaves);
        let own = distribute_dofs_graph(&lists, &partition, c.n_free()).unwrap();
        let sys = DistributedSystem::from_global(&a, &b, &own);
        runs.push(parallel_cg(&sys, config.tol, config.max_iter, Execution::Parallel).unwrap());
    }
    let iters: Vec<usize> = runs.iter().map(|r| r.iterations).collect();
    let same_iters = iters.iter().all(|&i| i == iters[0]);
    let scale = runs[0].solution.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = runs
        .iter()
        .skip(1)
        .flat_map(|r| r.solution.iter().zip(&runs[0].solution).map(|(a, b)| (a - b).abs() / scale))
        .fold(0.0f64, f64::max);
    let secs = t.elapsed().as_secs_f64();
    check(
        same_iters && diff <= 1e-10 && secs < 120.0,
        format!("CG iterations {iters:?}, max relative difference {diff:.1e}, {secs:.1} s"),
    )
}

fn load_balance() -> Outcome {
    let t = Instant::now();
    let mesh = run_a_mesh();
    let dofs = DofMap::new(&mesh, &OrderField::Uniform(18)).unwrap();
    let leaves = mesh.active_leaf_elements();
    let centroid = |m: &Mesh, l: usize| -> Point { m.element(l).bounds.center() };
    let w: Vec<f64> = compute_leaf_weights(&mesh, &dofs, &Problem::default(), &leaves, Execution::Sequential)
        .iter()
        .map(|w| w.w_star)
        .collect();
    let c: Vec<Point> = leaves.iter().map(|&l| centroid(&mesh, l)).collect();
    let run_a = improve_geometric(&initial_contiguous_partition(leaves.len(), 8), &c, &w).imbalance(&w);
    let mut never_worse = true;
    for seed in 0..20u64 {
        let case = random_case(3000 + seed, 1000, 4);
        let dofs = DofMap::new(&case.mesh, &case.order).unwrap();
        let leaves = case.mesh.active_leaf_elements();
        let w: Vec<f64> = compute_leaf_weights(&case.mesh, &dofs, &Problem::default(), &leaves, Execution::Sequential)
            .iter()
            .map(|w| w.w_star)
            .collect();
        let c: Vec<Point> = leaves.iter().map(|&l| centroid(&case.mesh, l)).collect();
        for ranks in [2, 3, 4, 8] {
            let initial = initial_contiguous_partition(leaves.len(), ranks);
            never_worse &= improve_geometric(&initial, &c, &w).imbalance(&w) <= initial.imbalance(&w);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        run_a <= 1.10 && never_worse && secs < 60.0,
        format!("run A (p=18, P=8) imbalance {run_a:.4}, never worse than contiguous {never_worse}, {secs:.1} s"),
    )
}

fn scaling() -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let config =
        RunConfig { order: OrderField::Uniform(6), steps: 5, execution: Execution::Parallel, ..Default::default() };
    let rows = scaling_study(&config, &[1, 4]).unwrap();
    let speedup = rows[1].speedup_integrate;
    let same_work = rows[0].element_integrations == rows[1].element_integrations;
    let detail =
        format!("integration speedup at 4 ranks {speedup:.2} on {cores} cores, equal integration counts {same_work}");
    let verdict = if !same_work {
        Verdict::Fail
    } else if speedup >= 3.0 {
        Verdict::Pass
    } else {
        Verdict::Warn
    };
    Outcome { verdict, detail }
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("leaf-count reproduction", leaf_counts),
        ("DOF-count reproduction", dof_count),
        ("ghost-free distributed assembly", ghost_free_assembly),
        ("majority-owner DOF distribution", dof_distribution),
        ("communication ordering", communication_ordering),
        ("convergence", convergence),
        ("FCM geometry convergence", fcm_area),
        ("parallel solve equivalence", parallel_solve),
        ("load balance", load_balance),
        ("scaling smoke test", scaling),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let tag = match out.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Warn => "WARN",
        };
        println!("criterion {:>2} [{tag}] {name}: {}", i + 1, out.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
