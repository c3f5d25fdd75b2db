use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mlhp::basis::{DofMap, FieldApproximation, OrderField};
use mlhp::export::{probe_csv, vtu};
use mlhp::partition::{assign_unique_leaf_indices, partition_csv};
use mlhp::pipeline::{
    convergence_csv, partition_leaves, run_pipeline, scaling_csv, scaling_study, Benchmark, DofDistribution,
    Partitioner, RunConfig, RunOutcome, Schedule,
};
use mlhp::Execution;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mlhp", version, about = "Multi-level hp finite cell benchmarks on simulated ranks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write report, convergence, partition, mesh and probe files.
    Run(RunArgs),
    /// Run the same study for several rank counts and write scaling.csv.
    Scale(RunArgs),
    /// Rewrite mesh and probe files from the artifacts of an earlier run.
    Export(ExportArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// lshape, fcm_disk or custom.
    #[arg(value_name = "BENCHMARK", value_parser = parse_benchmark)]
    benchmark_pos: Option<Benchmark>,
    /// Same as the positional argument.
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: Option<Benchmark>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSG geometry JSON for the custom benchmark.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Base elements per unit length.
    #[arg(long)]
    res: Option<usize>,
    /// Refinement steps after the base mesh.
    #[arg(long)]
    steps: Option<usize>,
    /// Uniform polynomial order.
    #[arg(long, conflicts_with = "p_graded")]
    p: Option<usize>,
    /// Order per level, e.g. `l0:8,l1:6,l2:4,l3:1`.
    #[arg(long, value_parser = parse_graded)]
    p_graded: Option<OrderField>,
    /// Rank count; `scale` takes a comma-separated list.
    #[arg(long)]
    ranks: Option<String>,
    /// contiguous, sfc or graph.
    #[arg(long, value_parser = parse_partitioner)]
    partitioner: Option<Partitioner>,
    /// contiguous or graph (majority owner).
    #[arg(long, value_parser = parse_dof_dist)]
    dof_dist: Option<DofDistribution>,
    /// Indicator value in the fictitious domain.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Space-tree depth for cut cells.
    #[arg(long)]
    depth: Option<usize>,
    /// Relative residual at which CG stops.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// corner, moving, boundary or random.
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<Schedule>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Build meshes, DOFs and partitions without integrating or solving.
    #[arg(long)]
    dry_run: bool,
    /// Seed of the random schedule.
    #[arg(long)]
    seed: Option<u64>,
    /// Run ranks one after another instead of concurrently.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory holding config.json (and solution.json, if solved).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Probe grid points per axis.
    #[arg(long, default_value_t = 101)]
    probe: usize,
}

fn parse_choice<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown choice `{s}`"))
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    parse_choice(s)
}

fn parse_partitioner(s: &str) -> Result<Partitioner, String> {
    parse_choice(s)
}

fn parse_dof_dist(s: &str) -> Result<DofDistribution, String> {
    parse_choice(s)
}

fn parse_schedule(s: &str) -> Result<Schedule, String> {
    parse_choice(s)
}

fn parse_graded(s: &str) -> Result<OrderField, String> {
    let mut levels = Vec::new();
    for part in s.split(',') {
        let (l, p) = part.trim().split_once(':').ok_or_else(|| format!("expected lN:P, got `{part}`"))?;
        let l: usize = l.trim_start_matches('l').parse().map_err(|_| format!("bad level in `{part}`"))?;
        let p: usize = p.parse().map_err(|_| format!("bad order in `{part}`"))?;
        levels.push((l, p));
    }
    levels.sort_unstable();
    if levels.iter().enumerate().any(|(i, &(l, _))| l != i) {
        return Err("levels must be l0, l1, ... without gaps".into());
    }
    Ok(OrderField::Graded(levels.into_iter().map(|(_, p)| p).collect()))
}

fn parse_ranks(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|r| r.trim().parse::<usize>().with_context(|| format!("bad rank count `{r}`"))).collect()
}

impl RunArgs {
    /// Config file (if any) overridden by flags.
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(b) = self.benchmark.or(self.benchmark_pos) {
            c.benchmark = b;
        }
        if let Some(path) = &self.geometry {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            c.geometry = Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field.clone() { c.$field = v; })*};
        }
        set!(res, steps, partitioner, dof_dist, epsilon, depth, tol, max_iter, seed);
        if let Some(p) = self.p {
            c.order = OrderField::Uniform(p);
        }
        if let Some(g) = &self.p_graded {
            c.order = g.clone();
        }
        if self.schedule.is_some() {
            c.schedule = self.schedule;
        }
        if self.dry_run {
            c.dry_run = true;
        }
        if self.sequential {
            c.execution = Execution::Sequential;
        }
        Ok(c)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_artifacts(out: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let last = out.reports.last();
    let report = json!({
        "benchmark": out.config.benchmark,
        "leaves": last.map(|r| r.leaves),
        "dofs": last.map(|r| r.dofs),
        "steps": out.reports,
        "error": out.failure.as_ref().map(|e| e.to_string()),
    });
    write(dir, "report.json", &serde_json::to_string_pretty(&report)?)?;
    write(dir, "config.json", &serde_json::to_string_pretty(&out.config)?)?;
    write(dir, "convergence.csv", &convergence_csv(&out.reports))?;
    write(dir, "partition.csv", &partition_csv(&out.leaves, &out.partition, &out.weights))?;
    let step = last.map_or(0, |r| r.step);
    write(
        dir,
        "mesh.vtu",
        &vtu(&out.mesh, &out.dofs, &out.leaves, &out.partition, &out.weights, out.solution.as_ref()),
    )?;
    let solution_path = dir.join("solution.json");
    match &out.solution {
        Some(u) => {
            write(
                dir,
                "solution.json",
                &serde_json::to_string(&json!({ "step": step, "coefficients": u.coefficients }))?,
            )?;
            write(dir, "probe.csv", &probe_csv(&out.mesh, &out.dofs, u, 101))?;
        }
        None if solution_path.exists() => fs::remove_file(&solution_path)?,
        None => {}
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut config = args.config()?;
    if let Some(r) = &args.ranks {
        config.ranks = r.trim().parse().with_context(|| format!("bad rank count `{r}`"))?;
    }
    let out = run_pipeline(&config)?;
    write_artifacts(&out, &args.out)?;
    for r in &out.reports {
        let err = r.energy_error.map_or("-".to_string(), |e| format!("{e:.6e}"));
        println!(
            "step {:>2}  leaves {:>7}  dofs {:>9}  cg {:>5}  energy error {}  imbalance {:.3}",
            r.step, r.leaves, r.dofs, r.cg_iterations, err, r.imbalance
        );
    }
    if let Some(e) = out.failure {
        bail!("run stopped: {e}");
    }
    Ok(())
}

fn cmd_scale(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let ranks = match &args.ranks {
        Some(r) => parse_ranks(r)?,
        None => vec![1, 2, 4],
    };
    let rows = scaling_study(&config, &ranks)?;
    fs::create_dir_all(&args.out)?;
    let csv = scaling_csv(&rows);
    write(&args.out, "scaling.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let config_path = args.out.join("config.json");
    let text =
        fs::read_to_string(&config_path).with_context(|| format!("missing run artifact {}", config_path.display()))?;
    let config: RunConfig = serde_json::from_str(&text)?;
    let solution: Option<(usize, FieldApproximation)> = match fs::read_to_string(args.out.join("solution.json")) {
        Ok(s) => {
            let v: serde_json::Value = serde_json::from_str(&s)?;
            let step = v["step"].as_u64().context("solution.json without step")? as usize;
            let coefficients = serde_json::from_value(v["coefficients"].clone())?;
            Some((step, FieldApproximation::new(coefficients)))
        }
        Err(_) => None,
    };
    let step = solution.as_ref().map_or(config.steps, |s| s.0);
    let mesh = config.mesh_at(step)?;
    let dofs = DofMap::new(&mesh, &config.order)?;
    if let Some((_, u)) = &solution {
        if u.coefficients.len() != dofs.total() {
            bail!("solution.json does not match the mesh rebuilt from config.json");
        }
    }
    let leaves = assign_unique_leaf_indices(&mesh);
    let (partition, weights, _) = partition_leaves(&config, &mesh, &dofs, &config.problem(), &leaves);
    let u = solution.as_ref().map(|s| &s.1);
    write(&args.out, "mesh.vtu", &vtu(&mesh, &dofs, &leaves, &partition, &weights, u))?;
    if let Some(u) = u {
        write(&args.out, "probe.csv", &probe_csv(&mesh, &dofs, u, args.probe))?;
    }
    println!("exported {} cells", leaves.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
