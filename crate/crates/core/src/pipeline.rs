//! Run configuration and the per-step pipeline: refine, partition, integrate,
//! distribute DOFs, assemble, solve, postprocess.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{DofMap, FieldApproximation, OrderField};
use crate::distributed::{
    distribute_dofs_contiguous, distribute_dofs_graph, exchange_and_assemble, integrate_rank_system, leaf_free_dofs,
    parallel_cg, DofOwnership, RankContext,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh::{BaseMeshSpec, BoundingBox, ElementId, Mesh, Point};
use crate::partition::{
    assign_unique_leaf_indices, compute_leaf_weights, edge_cut, improve_geometric, improve_graph,
    initial_contiguous_partition, LeafGraph, LeafWeight, RankPartition,
};
use crate::physics::{
    energy_error, energy_error_in, BoundaryConditions, Constraints, ExactSolution, LShapeExact, Problem,
    QuarterDiskExact, Segment,
};
use crate::quadrature::{EmbeddedDomain, Geometry, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    #[default]
    Lshape,
    FcmDisk,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Partitioner {
    Contiguous,
    #[default]
    Sfc,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DofDistribution {
    Contiguous,
    #[default]
    Graph,
}

/// How the mesh changes from one step to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Refine the leaves touching the re-entrant corner.
    Corner,
    /// Start over from the base mesh and refine towards a different corner
    /// each step.
    Moving,
    /// Refine leaves cut by the embedded boundary.
    Boundary,
    /// Refine a seeded random tenth of the leaves.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    /// Elements per unit length of the base grid.
    pub res: usize,
    pub steps: usize,
    pub order: OrderField,
    pub ranks: usize,
    pub partitioner: Partitioner,
    pub dof_dist: DofDistribution,
    pub epsilon: f64,
    pub depth: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub dry_run: bool,
    pub seed: u64,
    /// Defaults to `corner` for the L-shape and `boundary` otherwise.
    pub schedule: Option<Schedule>,
    pub execution: Execution,
    /// Physical domain of the `custom` benchmark.
    pub geometry: Option<Geometry>,
    /// Bounding box of the `custom` benchmark, `[lo, hi]`.
    pub domain: Option<[Point; 2]>,
    /// Constant volume source of the `custom` benchmark.
    pub source: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::Lshape,
            res: 16,
            steps: 5,
            order: OrderField::Uniform(2),
            ranks: 1,
            partitioner: Partitioner::Sfc,
            dof_dist: DofDistribution::Graph,
            epsilon: DEFAULT_EPSILON,
            depth: 4,
            tol: 1e-10,
            max_iter: 50_000,
            dry_run: false,
            seed: 0,
            schedule: None,
            execution: Execution::default(),
            geometry: None,
            domain: None,
            source: 1.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        self.order.validate()?;
        if self.res == 0 {
            return bad("res must be positive");
        }
        if self.ranks == 0 {
            return bad("ranks must be positive");
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad("tol must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if self.benchmark == Benchmark::Custom {
            if self.geometry.is_none() {
                return bad("the custom benchmark needs a geometry");
            }
            if let Some([lo, hi]) = self.domain {
                if !(hi[0] > lo[0] && hi[1] > lo[1]) {
                    return bad("domain must have positive extent");
                }
            }
        }
        if self.schedule == Some(Schedule::Corner) && self.benchmark != Benchmark::Lshape {
            return bad("the corner schedule applies to the lshape benchmark only");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule.unwrap_or(match self.benchmark {
            Benchmark::Lshape => Schedule::Corner,
            _ => Schedule::Boundary,
        })
    }

    fn custom_box(&self) -> [Point; 2] {
        self.domain.unwrap_or([[0.0, 0.0], [1.0, 1.0]])
    }

    pub fn base_mesh(&self) -> BaseMeshSpec {
        match self.benchmark {
            Benchmark::Lshape => BaseMeshSpec::lshape(self.res),
            Benchmark::FcmDisk => BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], self.res, self.res),
            Benchmark::Custom => {
                let [lo, hi] = self.custom_box();
                let n = |a: usize| (((hi[a] - lo[a]) * self.res as f64).round() as usize).max(1);
                BaseMeshSpec::rectangle(lo, hi, n(0), n(1))
            }
        }
    }

    pub fn embedded(&self) -> Option<EmbeddedDomain> {
        match self.benchmark {
            Benchmark::Lshape => None,
            Benchmark::FcmDisk => Some(EmbeddedDomain::new(quarter_disk(), self.epsilon)),
            Benchmark::Custom => self.geometry.clone().map(|g| EmbeddedDomain::new(g, self.epsilon)),
        }
    }

    pub fn problem(&self) -> Problem {
        let bcs = match self.benchmark {
            Benchmark::Lshape => BoundaryConditions::lshape(),
            Benchmark::FcmDisk => {
                let mut bcs = BoundaryConditions::dirichlet_only(&[
                    Segment::new([0.0, 0.0], [1.0, 0.0]),
                    Segment::new([0.0, 0.0], [0.0, 1.0]),
                ]);
                bcs.source = Some(Arc::new(QuarterDiskExact::source));
                bcs
            }
            Benchmark::Custom => {
                let [lo, hi] = self.custom_box();
                let mut bcs = BoundaryConditions::dirichlet_only(&[
                    Segment::new(lo, [hi[0], lo[1]]),
                    Segment::new([lo[0], hi[1]], hi),
                    Segment::new(lo, [lo[0], hi[1]]),
                    Segment::new([hi[0], lo[1]], hi),
                ]);
                let f = self.source;
                bcs.source = Some(Arc::new(move |_| f));
                bcs
            }
        };
        Problem { bcs, embedded: self.embedded(), spacetree_depth: self.depth }
    }

    pub fn exact(&self) -> Option<Box<dyn ExactSolution>> {
        match self.benchmark {
            Benchmark::Lshape => Some(Box::new(LShapeExact)),
            Benchmark::FcmDisk => Some(Box::new(QuarterDiskExact)),
            Benchmark::Custom => None,
        }
    }

    /// Mesh after `step` refinement steps of the configured schedule.
    pub fn mesh_at(&self, step: usize) -> Result<Mesh> {
        let mut mesh = Mesh::new(&self.base_mesh())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for s in 1..=step {
            advance(self, &mut mesh, s, &mut rng)?;
        }
        Ok(mesh)
    }
}

/// Unit quarter disk in the positive quadrant.
pub fn quarter_disk() -> Geometry {
    Geometry::Disk { center: [0.0, 0.0], radius: 1.0 }
}

const MOVING_CORNERS: [Point; 4] = [[0.0, 0.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]];

fn advance(config: &RunConfig, mesh: &mut Mesh, step: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    match config.schedule() {
        Schedule::Corner => mesh.refine_towards([0.0, 0.0], 1),
        Schedule::Moving => {
            mesh.coarsen_all()?;
            let corners: Vec<Point> = match config.benchmark {
                Benchmark::Lshape => MOVING_CORNERS.to_vec(),
                _ => {
                    let b = mesh.bounding_box();
                    vec![b.lo, b.hi, [b.lo[0], b.hi[1]], [b.hi[0], b.lo[1]]]
                }
            };
            mesh.refine_towards(corners[step % corners.len()], step)
        }
        Schedule::Boundary => {
            let Some(domain) = config.embedded() else {
                return Err(Error::InvalidConfig("the boundary schedule needs an embedded geometry".into()));
            };
            let marked: Vec<ElementId> = mesh
                .active_leaf_elements()
                .into_iter()
                .filter(|&l| is_cut(&mesh.element(l).bounds, &domain.geometry))
                .collect();
            mesh.refine(&marked)
        }
        Schedule::Random => {
            let leaves = mesh.active_leaf_elements();
            let mut marked: Vec<ElementId> = leaves.iter().copied().filter(|_| rng.gen_bool(0.1)).collect();
            if marked.is_empty() {
                marked.push(leaves[rng.gen_range(0..leaves.len())]);
            }
            mesh.refine(&marked)
        }
    }
}

/// Whether a box has sample points on both sides of the geometry boundary.
fn is_cut(b: &BoundingBox, g: &Geometry) -> bool {
    const N: usize = 4;
    let mut inside = 0;
    for j in 0..=N {
        for i in 0..=N {
            let x = b.from_reference([2.0 * i as f64 / N as f64 - 1.0, 2.0 * j as f64 / N as f64 - 1.0], 2);
            inside += usize::from(g.contains(x));
        }
    }
    inside != 0 && inside != (N + 1) * (N + 1)
}

/// Exclusive wall time of each phase in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub refine: f64,
    pub partition: f64,
    pub integrate: f64,
    pub dof_dist: f64,
    pub assemble: f64,
    pub solve: f64,
    pub postprocess: f64,
}

impl PhaseTimings {
    pub fn sum(&self) -> f64 {
        self.refine + self.partition + self.integrate + self.dof_dist + self.assemble + self.solve + self.postprocess
    }

    pub fn add(&mut self, other: &PhaseTimings) {
        self.refine += other.refine;
        self.partition += other.partition;
        self.integrate += other.integrate;
        self.dof_dist += other.dof_dist;
        self.assemble += other.assemble;
        self.solve += other.solve;
        self.postprocess += other.postprocess;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankReport {
    pub leaf_count: usize,
    pub weight_sum: f64,
    pub sent_triplets: usize,
    pub owned_dofs: usize,
    pub element_integrations: usize,
    /// Entries of the rank's intermediate system.
    pub triplets: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub leaves: usize,
    /// All active modes, constrained ones included.
    pub dofs: usize,
    pub free_dofs: usize,
    pub per_rank: Vec<RankReport>,
    pub phases: PhaseTimings,
    /// Wall time of the whole step; the gap to the phase sum is untimed glue.
    pub total_time: f64,
    pub cg_iterations: usize,
    pub residual: Option<f64>,
    pub energy_error: Option<f64>,
    /// Measure of the quadrature points inside the embedded geometry.
    pub alpha_area: Option<f64>,
    pub imbalance: f64,
    pub edge_cut: Option<f64>,
    pub peak_rss_kb: Option<u64>,
}

/// Everything a run produced, for reporting and export.
#[derive(Debug)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub reports: Vec<StepReport>,
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub leaves: Vec<ElementId>,
    pub partition: RankPartition,
    pub weights: Vec<LeafWeight>,
    /// Coefficients over all DOFs of the last solved step.
    pub solution: Option<FieldApproximation>,
    /// First error that stopped the run; reports up to it are kept.
    pub failure: Option<Error>,
}

/// Peak resident set size of this process, if the platform reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// State carried from one step to the next.
struct StepState {
    leaves: Vec<ElementId>,
    dofs: DofMap,
    partition: RankPartition,
    weights: Vec<LeafWeight>,
    solution: Option<FieldApproximation>,
}

pub fn partition_leaves(
    config: &RunConfig,
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &Problem,
    leaves: &[ElementId],
) -> (RankPartition, Vec<LeafWeight>, Option<f64>) {
    let weights = compute_leaf_weights(mesh, dofs, problem, leaves, config.execution);
    let w: Vec<f64> = weights.iter().map(|w| w.w_star).collect();
    let initial = initial_contiguous_partition(leaves.len(), config.ranks);
    match config.partitioner {
        Partitioner::Contiguous => (initial, weights, None),
        Partitioner::Sfc => {
            let centroids: Vec<Point> = leaves.iter().map(|&l| mesh.element(l).bounds.center()).collect();
            (improve_geometric(&initial, &centroids, &w), weights, None)
        }
        Partitioner::Graph => {
            let graph = LeafGraph::new(mesh, dofs, leaves, w);
            let p = improve_graph(&initial, &graph);
            let cut = edge_cut(&graph, &p);
            (p, weights, Some(cut))
        }
    }
}

/// Runs every step of the configured study.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let exec = config.execution;
    let problem = config.problem();
    let exact = config.exact();
    let mut mesh = Mesh::new(&config.base_mesh())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reports = Vec::new();
    let mut state: Option<StepState> = None;
    let mut failure = None;

    for step in 0..=config.steps {
        let start = Instant::now();
        let mut phases = PhaseTimings::default();
        let mut report = StepReport { step, ..Default::default() };

        let t = Instant::now();
        if step > 0 {
            advance(config, &mut mesh, step, &mut rng)?;
        }
        let dofs = DofMap::new(&mesh, &config.order)?;
        let constraints = Constraints::new(&mesh, &dofs, &problem.bcs)?;
        let leaves = assign_unique_leaf_indices(&mesh);
        phases.refine = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let (partition, weights, cut) = partition_leaves(config, &mesh, &dofs, &problem, &leaves);
        let w: Vec<f64> = weights.iter().map(|w| w.w_star).collect();
        let mut contexts = RankContext::all(&partition);
        phases.partition = t.elapsed().as_secs_f64();

        report.leaves = leaves.len();
        report.dofs = dofs.total();
        report.free_dofs = constraints.n_free();
        report.imbalance = partition.imbalance(&w);
        report.edge_cut = cut;
        let rank_weights = partition.rank_weights(&w);
        report.per_rank = (0..config.ranks)
            .map(|r| RankReport {
                leaf_count: partition.leaves(r).len(),
                weight_sum: rank_weights[r],
                ..Default::default()
            })
            .collect();

        let systems = if config.dry_run {
            None
        } else {
            let t = Instant::now();
            let s =
                exec.map(&contexts, |ctx| integrate_rank_system(ctx, &mesh, &dofs, &problem, &constraints, &leaves));
            phases.integrate = t.elapsed().as_secs_f64();
            Some(s)
        };

        let t = Instant::now();
        let ownership = match distribute(config, &mesh, &dofs, &constraints, &leaves, &partition) {
            Ok(o) => o,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        phases.dof_dist = t.elapsed().as_secs_f64();
        for (r, rr) in report.per_rank.iter_mut().enumerate() {
            rr.owned_dofs = ownership.owned(r).len();
        }

        let mut solution = None;
        if let Some(systems) = systems {
            for (rr, s) in report.per_rank.iter_mut().zip(&systems) {
                rr.element_integrations = s.element_integrations;
                rr.triplets = s.triplet_count();
            }
            let t = Instant::now();
            let assembled = exchange_and_assemble(&mut contexts, &systems, &ownership, exec);
            drop(systems);
            phases.assemble = t.elapsed().as_secs_f64();
            let system = match assembled {
                Ok(s) => s,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            for (rr, &sent) in report.per_rank.iter_mut().zip(&system.sent_triplets) {
                rr.sent_triplets = sent;
            }

            let t = Instant::now();
            let solved = parallel_cg(&system, config.tol, config.max_iter, exec);
            phases.solve = t.elapsed().as_secs_f64();
            match solved {
                Ok(cg) => {
                    report.cg_iterations = cg.iterations;
                    report.residual = Some(cg.residual);
                    solution = Some(FieldApproximation::new(constraints.expand(&cg.solution)));
                }
                Err(e) => {
                    if let Error::NotConverged { iterations, residual, .. } = &e {
                        report.cg_iterations = *iterations;
                        report.residual = Some(*residual);
                    }
                    report.phases = phases;
                    report.total_time = start.elapsed().as_secs_f64();
                    reports.push(report);
                    failure = Some(e);
                    state = Some(StepState { leaves, dofs, partition, weights, solution: None });
                    break;
                }
            }
        }

        let t = Instant::now();
        if let (Some(u), Some(exact)) = (&solution, &exact) {
            report.energy_error = Some(match &problem.embedded {
                Some(g) => energy_error_in(&mesh, &dofs, u, exact.as_ref(), Some(g), config.depth)?,
                None => energy_error(&mesh, &dofs, u, exact.as_ref())?,
            });
        }
        if let Some(g) = &problem.embedded {
            report.alpha_area = Some(alpha_area(&mesh, &leaves, g, config.depth, exec));
        }
        report.peak_rss_kb = peak_rss_kb();
        phases.postprocess = t.elapsed().as_secs_f64();

        report.phases = phases;
        report.total_time = start.elapsed().as_secs_f64();
        reports.push(report);
        state = Some(StepState { leaves, dofs, partition, weights, solution });
    }

    let state = match state {
        Some(s) => s,
        None => {
            // failed before the first step completed
            let dofs = DofMap::new(&mesh, &config.order)?;
            let leaves = assign_unique_leaf_indices(&mesh);
            let (partition, weights, _) = partition_leaves(config, &mesh, &dofs, &problem, &leaves);
            StepState { leaves, dofs, partition, weights, solution: None }
        }
    };
    Ok(RunOutcome {
        config: config.clone(),
        reports,
        mesh,
        dofs: state.dofs,
        leaves: state.leaves,
        partition: state.partition,
        weights: state.weights,
        solution: state.solution,
        failure,
    })
}

fn distribute(
    config: &RunConfig,
    mesh: &Mesh,
    dofs: &DofMap,
    constraints: &Constraints,
    leaves: &[ElementId],
    partition: &RankPartition,
) -> Result<DofOwnership> {
    match config.dof_dist {
        DofDistribution::Contiguous => Ok(distribute_dofs_contiguous(constraints.n_free(), config.ranks)),
        DofDistribution::Graph => {
            let lists = leaf_free_dofs(mesh, dofs, constraints, leaves, config.execution);
            distribute_dofs_graph(&lists, partition, constraints.n_free())
        }
    }
}

/// Area of the physical region as seen by the space tree. Cells are measured
/// with the one-point rule: the integrand is constant, and higher orders only
/// add pointwise noise on the deepest cut cells.
pub fn alpha_area(mesh: &Mesh, leaves: &[ElementId], domain: &EmbeddedDomain, depth: usize, exec: Execution) -> f64 {
    let parts = exec.map(leaves, |&l| {
        let cells = crate::quadrature::spacetree_cells(mesh.element(l).bounds, mesh.dim(), domain, depth, 1);
        cells.iter().flat_map(|c| &c.points).filter(|p| p.alpha == 1.0).map(|p| p.weight).sum::<f64>()
    });
    parts.into_iter().sum()
}

/// `step,dofs,energy_error` rows; the error column is empty when unknown.
pub fn convergence_csv(reports: &[StepReport]) -> String {
    let mut out = String::from("step,dofs,energy_error\n");
    for r in reports {
        let e = r.energy_error.map(|e| format!("{e:.12e}")).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.step, r.dofs, e));
    }
    out
}

/// One row of a strong-scaling study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub ranks: usize,
    pub integrate: f64,
    pub assemble: f64,
    pub solve: f64,
    pub total: f64,
    pub speedup_integrate: f64,
    pub speedup_solve: f64,
    pub speedup_total: f64,
    /// Share of all triplets that crossed rank boundaries during assembly.
    pub comm_share: f64,
    pub element_integrations: usize,
    pub sent_triplets: usize,
    pub cg_iterations: usize,
}

/// Runs `config` once per rank count; speedups are relative to the first entry.
pub fn scaling_study(config: &RunConfig, ranks: &[usize]) -> Result<Vec<ScalingRow>> {
    let mut rows: Vec<ScalingRow> = Vec::new();
    for &p in ranks {
        let cfg = RunConfig { ranks: p, ..config.clone() };
        let out = run_pipeline(&cfg)?;
        if let Some(e) = out.failure {
            return Err(e);
        }
        let mut t = PhaseTimings::default();
        out.reports.iter().for_each(|r| t.add(&r.phases));
        let total: f64 = out.reports.iter().map(|r| r.total_time).sum();
        let sum = |f: fn(&RankReport) -> usize| out.reports.iter().flat_map(|r| &r.per_rank).map(f).sum::<usize>();
        let sent = sum(|r| r.sent_triplets);
        let all_triplets = sum(|r| r.triplets);
        let base = rows.first();
        let speed = |b: Option<f64>, v: f64| match b {
            Some(b) if v > 0.0 => b / v,
            _ => 1.0,
        };
        rows.push(ScalingRow {
            ranks: p,
            integrate: t.integrate,
            assemble: t.assemble,
            solve: t.solve,
            total,
            speedup_integrate: speed(base.map(|b| b.integrate), t.integrate),
            speedup_solve: speed(base.map(|b| b.solve), t.solve),
            speedup_total: speed(base.map(|b| b.total), total),
            comm_share: if all_triplets > 0 { sent as f64 / all_triplets as f64 } else { 0.0 },
            element_integrations: sum(|r| r.element_integrations),
            sent_triplets: sent,
            cg_iterations: out.reports.iter().map(|r| r.cg_iterations).sum(),
        });
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(
        "ranks,integrate,assemble,solve,total,speedup_integrate,speedup_solve,speedup_total,comm_share,element_integrations,sent_triplets,cg_iterations\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6},{},{},{}\n",
            r.ranks,
            r.integrate,
            r.assemble,
            r.solve,
            r.total,
            r.speedup_integrate,
            r.speedup_solve,
            r.speedup_total,
            r.comm_share,
            r.element_integrations,
            r.sent_triplets,
            r.cg_iterations
        ));
    }
    out
}
