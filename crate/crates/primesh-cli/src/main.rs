//! Command-line surface for the two-step modeling pipeline.
//!
//! Exit code 0 on success; on failure a single machine-readable
//! `error: <message>` line goes to stderr and the exit code is 1.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use primesh::config::RunConfig;
use primesh::dataset::{self, Category, Shape};
use primesh::env::{Env, MeshEnv, PrimEnv, TraceRow, TraceWriter};
use primesh::expert::demonstrate;
use primesh::geometry::{
    export_obj, loft_mesh, Cuboid, DepthMap, EdgeLoop, OccupancyGrid,
};
use primesh::nn::QNetwork;
use primesh::replay::write_archive;
use primesh::training::{
    self, evaluate_policy, model_shape, run_il, run_rl, AgentKind, IlOptions, Learner, SchemeMode,
    TrainSettings,
};

/// Environment variable overriding the run-directory root.
const RUN_ROOT_VAR: &str = "PRIMESH_RUN_ROOT";

#[derive(Parser)]
#[command(name = "primesh", version, about = "Two-step 3D modeling by editing agents")]
struct Cli {
    /// Configuration file (key = value sections); overrides the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in base profile: full-scale `paper` values or single-core `desk`.
    #[arg(long, global = true, default_value = "paper")]
    profile: String,
    /// Validate the configuration and print the plan without side effects.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    Prim,
    Mesh,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic box-shape dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate external VOXG grids and lay them out as a dataset.
    Ingest {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "external")]
        category: String,
        files: Vec<PathBuf>,
    },
    /// Roll the virtual expert over a dataset and write a demonstration archive.
    Demo {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "prim")]
        agent: AgentArg,
        /// Frozen primitive-agent checkpoint (required for mesh demos).
        #[arg(long)]
        prim_checkpoint: Option<PathBuf>,
        /// Also write per-shape episode traces next to the archive.
        #[arg(long)]
        traces: bool,
    },
    /// Imitation + self-exploration training of the primitive agent.
    TrainPrim {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        run: String,
    },
    /// Imitation + self-exploration training of the loop agent.
    TrainMesh {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        run: String,
        #[arg(long)]
        prim_checkpoint: PathBuf,
    },
    /// Train the primitive agent under one ablation scheme and report metrics.
    RunScheme {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        run: String,
    },
    /// Two-step inference: reference (+ optional target) to OBJ and traces.
    Model {
        #[arg(long)]
        prim_checkpoint: PathBuf,
        #[arg(long)]
        mesh_checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate trained checkpoints over a dataset; emit a metrics CSV.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        prim_checkpoint: PathBuf,
        #[arg(long)]
        mesh_checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loft a primitive list (one `x y z x' y' z'` per line) into an OBJ.
    ExportObj {
        #[arg(long)]
        primitives: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let base = RunConfig::profile(&cli.profile)?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text, base)?
        }
        None => base,
    };
    if let Ok(root) = std::env::var(RUN_ROOT_VAR) {
        if !root.is_empty() {
            cfg.run_root = root;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if cli.dry_run {
        return dry_run(&cli, &cfg);
    }
    match &cli.command {
        Command::GenData { out, count, category, seed } => {
            let category = Category::from_str(category)?;
            let shapes = dataset::generate_dataset(out, *count, category, cfg.resolution, *seed)?;
            println!("wrote {} shapes to {}", shapes.len(), out.display());
        }
        Command::Ingest { out, category, files } => {
            let shapes = dataset::ingest(files, out, category)?;
            println!("ingested {} grids into {}", shapes.len(), out.display());
        }
        Command::Demo { dataset: dir, out, agent, prim_checkpoint, traces } => {
            demo(&cfg, dir, out, *agent, prim_checkpoint.as_deref(), *traces)?;
        }
        Command::TrainPrim { dataset: dir, run } => {
            train_prim(&cfg, dir, run)?;
        }
        Command::TrainMesh { dataset: dir, run, prim_checkpoint } => {
            train_mesh(&cfg, dir, run, prim_checkpoint)?;
        }
        Command::RunScheme { dataset: dir, mode, run } => {
            run_scheme_cmd(&cfg, dir, mode, run)?;
        }
        Command::Model { prim_checkpoint, mesh_checkpoint, reference, target, out } => {
            model(prim_checkpoint, mesh_checkpoint, reference, target.as_deref(), out)?;
        }
        Command::Eval { dataset: dir, prim_checkpoint, mesh_checkpoint, out } => {
            eval_cmd(&cfg, dir, prim_checkpoint, mesh_checkpoint.as_deref(), out)?;
        }
        Command::ExportObj { primitives, out } => {
            export_obj_cmd(primitives, out)?;
        }
    }
    Ok(())
}

fn dry_run(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    println!("plan: configuration valid");
    for line in cfg.snapshot().lines() {
        println!("plan: {line}");
    }
    let what = match &cli.command {
        Command::GenData { out, count, category, .. } => {
            format!("generate {count} `{category}` shapes into {}", out.display())
        }
        Command::Ingest { out, files, .. } => {
            format!("ingest {} files into {}", files.len(), out.display())
        }
        Command::Demo { dataset, out, .. } => {
            format!("demonstrate over {} into {}", dataset.display(), out.display())
        }
        Command::TrainPrim { dataset, run } => {
            format!("train primitive agent on {} as run `{run}`", dataset.display())
        }
        Command::TrainMesh { dataset, run, .. } => {
            format!("train loop agent on {} as run `{run}`", dataset.display())
        }
        Command::RunScheme { dataset, mode, run } => {
            format!("run scheme `{mode}` on {} as run `{run}`", dataset.display())
        }
        Command::Model { reference, out, .. } => {
            format!("model {} into {}", reference.display(), out.display())
        }
        Command::Eval { dataset, out, .. } => {
            format!("evaluate over {} into {}", dataset.display(), out.display())
        }
        Command::ExportObj { primitives, out } => {
            format!("loft {} into {}", primitives.display(), out.display())
        }
    };
    println!("plan: {what}");
    Ok(())
}

fn run_dir(cfg: &RunConfig, run: &str) -> Result<PathBuf> {
    let dir = Path::new(&cfg.run_root).join(run);
    std::fs::create_dir_all(dir.join("traces"))?;
    std::fs::write(dir.join("config.cfg"), cfg.snapshot())?;
    Ok(dir)
}

fn load_net(path: &Path) -> Result<QNetwork<f32>> {
    let mut reader = BufReader::new(
        File::open(path).with_context(|| format!("missing checkpoint {}", path.display()))?,
    );
    Ok(QNetwork::read_checkpoint(&mut reader)?)
}

fn save_net(net: &mut QNetwork<f32>, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    net.write_checkpoint(&mut writer)?;
    writer.flush()?;
    Ok(())
}

fn prim_factory(cfg: &RunConfig) -> impl Fn(&Shape) -> primesh::Result<PrimEnv> + '_ {
    move |shape: &Shape| {
        Ok(PrimEnv::with_weights(
            shape.target.clone(),
            &shape.reference,
            cfg.alpha_local,
            cfg.alpha_parsimony,
        ))
    }
}

fn write_trace(path: &Path, columns: &[&str], rows: &[TraceRow]) -> Result<()> {
    let mut writer = TraceWriter::new(BufWriter::new(File::create(path)?), columns)?;
    for row in rows {
        writer.record(row)?;
    }
    Ok(())
}

fn demo(
    cfg: &RunConfig,
    dir: &Path,
    out: &Path,
    agent: AgentArg,
    prim_checkpoint: Option<&Path>,
    traces: bool,
) -> Result<()> {
    let shapes = dataset::load_dataset(dir)?;
    check_resolution(cfg, &shapes)?;
    let mut all = Vec::new();
    let mut trace_rows: Vec<(String, Vec<TraceRow>, &'static [&'static str])> = Vec::new();
    match agent {
        AgentArg::Prim => {
            for shape in &shapes {
                let mut env = prim_factory(cfg)(shape)?;
                let before = all.len();
                all.extend(demonstrate(&mut env));
                if traces {
                    let rows = trace_rows_from_experiences(&all[before..], &mut prim_factory(cfg)(shape)?)?;
                    trace_rows.push((shape.name.clone(), rows, &["i1", "i2", "n"]));
                }
            }
        }
        AgentArg::Mesh => {
            let prim_path = prim_checkpoint
                .ok_or_else(|| anyhow!("mesh demonstrations need --prim-checkpoint"))?;
            let prim_net = load_net(prim_path)?;
            for shape in &shapes {
                let (merged, _, _) = training::merged_primitives_for_shape(&prim_net, shape)?;
                let mut env = MeshEnv::new(shape.target.clone(), &shape.reference, &merged)?;
                let before = all.len();
                all.extend(demonstrate(&mut env));
                if traces {
                    let mut replay_env =
                        MeshEnv::new(shape.target.clone(), &shape.reference, &merged)?;
                    let rows = trace_rows_from_experiences(&all[before..], &mut replay_env)?;
                    trace_rows.push((shape.name.clone(), rows, &["iou"]));
                }
            }
        }
    }
    let mut writer = BufWriter::new(File::create(out)?);
    write_archive(&mut writer, &all)?;
    writer.flush()?;
    for (name, rows, columns) in trace_rows {
        let suffix = if agent == AgentArg::Prim { "prim" } else { "mesh" };
        write_trace(&out.with_file_name(format!("{name}.{suffix}.tsv")), columns, &rows)?;
    }
    println!("wrote {} demonstrations to {}", all.len(), out.display());
    Ok(())
}

/// Replays recorded actions through a fresh environment to recover the
/// per-step metric columns for a trace file.
fn trace_rows_from_experiences<E: Env>(
    records: &[primesh::replay::Experience],
    env: &mut E,
) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::with_capacity(records.len());
    for e in records {
        let step = env.step_index();
        let (reward, _) = env.step(e.action as usize)?;
        rows.push(TraceRow { step, action: e.action as usize, reward, extra: metric_columns(env) });
    }
    Ok(rows)
}

fn metric_columns<E: Env>(env: &E) -> Vec<f64> {
    env.metrics()
}

fn check_resolution(cfg: &RunConfig, shapes: &[Shape]) -> Result<()> {
    for s in shapes {
        if s.target.resolution() != cfg.resolution {
            bail!(
                "dataset resolution {} does not match configured resolution {}",
                s.target.resolution(),
                cfg.resolution
            );
        }
    }
    Ok(())
}

fn train_prim(cfg: &RunConfig, dir: &Path, run: &str) -> Result<()> {
    let shapes = dataset::load_dataset(dir)?;
    check_resolution(cfg, &shapes)?;
    let out_dir = run_dir(cfg, run)?;
    let settings = TrainSettings::from_run(cfg, AgentKind::Prim);
    let factory = prim_factory(cfg);
    let il = run_il::<_, f32>(&shapes, &factory, settings, IlOptions::standard())?;
    let mut learner = il.learner;
    run_rl(&mut learner, &shapes, &factory, Some(&il.demo_long))?;
    save_net(&mut learner.pair.current, &out_dir.join("prim.qnck"))?;
    let eval = evaluate_policy(&learner.pair, &shapes, &factory)?;
    write_metrics(
        &out_dir.join("metrics.csv"),
        &[metrics_row("train-prim", "all", &eval)],
    )?;
    write_run_traces(&out_dir, &shapes, &learner, cfg)?;
    println!(
        "run `{run}`: {} updates, mean accumulated reward {:.4}",
        learner.updates, eval.mean_accumulated_reward
    );
    Ok(())
}

fn write_run_traces(
    out_dir: &Path,
    shapes: &[Shape],
    learner: &Learner<f32>,
    cfg: &RunConfig,
) -> Result<()> {
    for shape in shapes.iter().take(4) {
        let mut env = prim_factory(cfg)(shape)?;
        let mut rows = Vec::new();
        while !env.is_done() {
            let step = env.step_index();
            let action = primesh::nn::greedy_action(&learner.pair.current, &env.observe(), env.legal_range());
            let (reward, _) = env.step(action)?;
            rows.push(TraceRow { step, action, reward, extra: env.metrics() });
        }
        write_trace(
            &out_dir.join("traces").join(format!("{}.prim.tsv", shape.name)),
            &["i1", "i2", "n"],
            &rows,
        )?;
    }
    Ok(())
}

fn train_mesh(cfg: &RunConfig, dir: &Path, run: &str, prim_checkpoint: &Path) -> Result<()> {
    let shapes = dataset::load_dataset(dir)?;
    check_resolution(cfg, &shapes)?;
    let out_dir = run_dir(cfg, run)?;
    let prim_net = load_net(prim_checkpoint)?;
    // The primitive agent is frozen; its merged output fixes each shape's
    // loop assignment for the whole mesh-training run.
    let mut merged_by_name: HashMap<String, Vec<Cuboid>> = HashMap::new();
    for shape in &shapes {
        let (merged, _, _) = training::merged_primitives_for_shape(&prim_net, shape)?;
        merged_by_name.insert(shape.name.clone(), merged);
    }
    let factory = |shape: &Shape| {
        MeshEnv::new(shape.target.clone(), &shape.reference, &merged_by_name[&shape.name])
    };
    let settings = TrainSettings::from_run(cfg, AgentKind::Mesh);
    let il = run_il::<_, f32>(&shapes, &factory, settings, IlOptions::standard())?;
    let mut learner = il.learner;
    run_rl(&mut learner, &shapes, &factory, Some(&il.demo_long))?;
    save_net(&mut learner.pair.current, &out_dir.join("mesh.qnck"))?;
    let eval = evaluate_policy(&learner.pair, &shapes, &factory)?;
    write_metrics(&out_dir.join("metrics.csv"), &[metrics_row("train-mesh", "all", &eval)])?;
    println!(
        "run `{run}`: {} updates, mean accumulated reward {:.4}",
        learner.updates, eval.mean_accumulated_reward
    );
    Ok(())
}

fn metrics_row(mode: &str, category: &str, eval: &training::EvalResult) -> String {
    format!(
        "{mode},{category},{:.6},{:.6},{:.6}",
        eval.mean_accumulated_reward, eval.mean_iou, eval.mean_chamfer
    )
}

fn write_metrics(path: &Path, rows: &[String]) -> Result<()> {
    let mut out = String::from("mode,category,accumulated_reward,iou,chamfer\n");
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run_scheme_cmd(cfg: &RunConfig, dir: &Path, mode: &str, run: &str) -> Result<()> {
    let mode = SchemeMode::from_str(mode)?;
    let shapes = dataset::load_dataset(dir)?;
    check_resolution(cfg, &shapes)?;
    let out_dir = run_dir(cfg, run)?;
    let settings = TrainSettings::from_run(cfg, AgentKind::Prim);
    let factory = prim_factory(cfg);
    let outcome = training::run_scheme::<_, f32>(mode, &shapes, &factory, settings)?;
    let mut learner = outcome.learner;
    save_net(&mut learner.pair.current, &out_dir.join("prim.qnck"))?;
    // Per-category evaluation rows.
    let mut categories: Vec<String> = shapes.iter().map(|s| s.category.clone()).collect();
    categories.sort();
    categories.dedup();
    let mut rows = Vec::new();
    for category in &categories {
        let subset: Vec<Shape> =
            shapes.iter().filter(|s| &s.category == category).cloned().collect();
        let eval = evaluate_policy(&learner.pair, &subset, &factory)?;
        rows.push(metrics_row(mode.as_str(), category, &eval));
    }
    write_metrics(&out_dir.join("metrics.csv"), &rows)?;
    for row in &rows {
        println!("{row}");
    }
    Ok(())
}

fn model(
    prim_checkpoint: &Path,
    mesh_checkpoint: &Path,
    reference: &Path,
    target: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let prim_net = load_net(prim_checkpoint)?;
    let mesh_net = load_net(mesh_checkpoint)?;
    let reference_map =
        DepthMap::read_pfm(&mut BufReader::new(File::open(reference)?))?;
    let (target_grid, has_target, resolution) = match target {
        Some(path) => {
            let grid = OccupancyGrid::read_voxg(&mut BufReader::new(File::open(path)?))?;
            let r = grid.resolution();
            (Arc::new(grid), true, r)
        }
        // Without a target the environments still need a frame; rewards and
        // IoU in the trace are then against an empty grid and meaningless.
        None => {
            let r = default_resolution_for(&prim_net);
            (Arc::new(OccupancyGrid::new(r)), false, r)
        }
    };
    let _ = resolution;
    let shape = Shape {
        name: "model".to_string(),
        category: "model".to_string(),
        target: target_grid,
        reference: Arc::new(reference_map),
    };
    std::fs::create_dir_all(out)?;
    let output = model_shape(&prim_net, &mesh_net, &shape)?;
    let mut obj = BufWriter::new(File::create(out.join("model.obj"))?);
    export_obj(&output.mesh, &mut obj)?;
    obj.flush()?;
    write_trace(&out.join("prim.tsv"), &["i1", "i2", "n"], &output.prim_trace)?;
    write_trace(&out.join("mesh.tsv"), &["iou"], &output.mesh_trace)?;
    let mut prims = String::new();
    for c in &output.merged {
        prims.push_str(&format!(
            "{} {} {} {} {} {}\n",
            c.min[0], c.min[1], c.min[2], c.max[0], c.max[1], c.max[2]
        ));
    }
    std::fs::write(out.join("primitives.txt"), prims)?;
    if has_target {
        println!(
            "iou {:.6} chamfer {}",
            output.final_iou,
            output.chamfer.map_or("n/a".to_string(), |c| format!("{c:.6}"))
        );
    }
    println!(
        "modeled: {} merged primitives, {} loops, {} vertices, {} triangles",
        output.merged.len(),
        output.loops.len(),
        output.mesh.vertices.len(),
        output.mesh.triangles.len()
    );
    Ok(())
}

fn default_resolution_for(_net: &QNetwork<f32>) -> u32 {
    64
}

fn eval_cmd(
    cfg: &RunConfig,
    dir: &Path,
    prim_checkpoint: &Path,
    mesh_checkpoint: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let shapes = dataset::load_dataset(dir)?;
    check_resolution(cfg, &shapes)?;
    let prim_net = load_net(prim_checkpoint)?;
    let prim_pair = pair_from(prim_net);
    let mut categories: Vec<String> = shapes.iter().map(|s| s.category.clone()).collect();
    categories.sort();
    categories.dedup();
    let factory = prim_factory(cfg);
    let mut rows = Vec::new();
    for category in &categories {
        let subset: Vec<Shape> =
            shapes.iter().filter(|s| &s.category == category).cloned().collect();
        let eval = evaluate_policy(&prim_pair, &subset, &factory)?;
        rows.push(metrics_row("prim", category, &eval));
    }
    if let Some(mesh_path) = mesh_checkpoint {
        let mesh_net = load_net(mesh_path)?;
        for category in &categories {
            let subset: Vec<Shape> =
                shapes.iter().filter(|s| &s.category == category).cloned().collect();
            let mut total_reward = 0.0;
            let mut total_iou = 0.0;
            let mut chamfers = Vec::new();
            for shape in &subset {
                let output = model_shape(&prim_pair.current, &mesh_net, shape)?;
                total_reward += output.mesh_reward;
                total_iou += output.final_iou;
                if let Some(c) = output.chamfer {
                    chamfers.push(c);
                }
            }
            let n = subset.len() as f64;
            let eval = training::EvalResult {
                shapes: subset.len(),
                mean_accumulated_reward: total_reward / n,
                mean_iou: total_iou / n,
                mean_chamfer: if chamfers.is_empty() {
                    f64::NAN
                } else {
                    chamfers.iter().sum::<f64>() / chamfers.len() as f64
                },
            };
            rows.push(metrics_row("mesh", category, &eval));
        }
    }
    write_metrics(out, &rows)?;
    for row in &rows {
        println!("{row}");
    }
    Ok(())
}

fn pair_from(net: QNetwork<f32>) -> primesh::nn::DdqnPair<f32> {
    let cfg = net.cfg;
    let mut pair = primesh::nn::DdqnPair::new(cfg, 0);
    pair.current = net;
    pair.sync_target();
    pair
}

fn export_obj_cmd(primitives: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(primitives)?;
    let mut loops: Vec<EdgeLoop> = Vec::new();
    for (owner, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let nums: Vec<i32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| anyhow!("bad primitive line: {line}")))
            .collect::<Result<_>>()?;
        if nums.len() != 6 {
            bail!("expected 6 integers per primitive line, got {}", nums.len());
        }
        let c = Cuboid::new([nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]]);
        // Two boundary loops along x reproduce the box surface.
        loops.push(EdgeLoop::new(0, [c.min[0], c.min[1], c.min[2]], [c.min[0], c.max[1], c.max[2]], owner));
        loops.push(EdgeLoop::new(0, [c.max[0], c.min[1], c.min[2]], [c.max[0], c.max[1], c.max[2]], owner));
    }
    if loops.is_empty() {
        bail!("no primitives in {}", primitives.display());
    }
    let mesh = loft_mesh(&loops)?;
    let mut writer = BufWriter::new(File::create(out)?);
    export_obj(&mesh, &mut writer)?;
    writer.flush()?;
    println!("lofted {} primitives into {}", loops.len() / 2, out.display());
    Ok(())
}
