//! Subcommand implementations. Every function returns the process exit
//! code: 0 for success, 2 for a solver timeout under `--strict`. Errors
//! bubble out as `anyhow` and exit 1.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use mcm_core::costmodel::{CostParams, ModelOptions, Partition};
use mcm_core::netsim::{run_scenario, Node, Scenario};
use mcm_core::optimize::{
    build_miqp, export_lp, ga_optimize, miqp_optimize, simba_optimize, uniform_optimize, GaConfig,
    Objective, SolveResult, SolveStatus,
};
use mcm_core::pipeline::{build_rcpsp, per_sample_speedup, schedule, ScheduleMethod};
use mcm_core::workload::{bundled_tasks, load_task, BatchSpec, TaskSequence};
use mcm_core::{Error, GridSpec, GridType, Topology};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{memory_preset, Experiment};
use crate::{
    MethodArg, ModelArgs, ObjectiveArg, OptimizeArgs, OptimizerArg, PipelineArgs, SimulateArgs,
    SweepArgs,
};

impl fmt::Display for OptimizerArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OptimizerArg::Uniform => "uniform",
            OptimizerArg::Simba => "simba",
            OptimizerArg::Ga => "ga",
            OptimizerArg::Miqp => "miqp",
        };
        f.write_str(s)
    }
}

impl fmt::Display for ObjectiveArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveArg::Latency => "latency",
            ObjectiveArg::Edp => "edp",
        })
    }
}

impl From<ObjectiveArg> for Objective {
    fn from(a: ObjectiveArg) -> Objective {
        match a {
            ObjectiveArg::Latency => Objective::Latency,
            ObjectiveArg::Edp => Objective::Edp,
        }
    }
}

/// Resolves the workload named on the command line or in the config:
/// an explicit file path, a bundled task name, or the config's path.
pub fn resolve_workload(
    workload: &Option<PathBuf>,
    task: &Option<String>,
    exp: &Experiment,
) -> Result<(String, TaskSequence)> {
    if let Some(path) = workload {
        let seq = load_task(path).with_context(|| format!("workload {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        return Ok((name, seq));
    }
    if let Some(name) = task {
        let mut bundle = bundled_tasks();
        let seq = bundle.remove(name.as_str()).ok_or_else(|| {
            let known: Vec<String> = bundled_tasks().keys().cloned().collect();
            anyhow!("unknown bundled task {name:?}; available: {}", known.join(", "))
        })?;
        return Ok((name.clone(), seq));
    }
    if let Some(path) = &exp.workload {
        let seq = load_task(path).with_context(|| format!("workload {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        return Ok((name, seq));
    }
    bail!("no workload: pass --workload <file>, --task <name>, or set `workload` in the config")
}

/// Flags only ever switch a mode on; the config file is the way to pin
/// it off.
fn apply_flags(mut options: ModelOptions, redistribute: bool, async_fuse: bool) -> ModelOptions {
    if redistribute {
        options.redistribute = true;
    }
    if async_fuse {
        options.async_fuse = true;
    }
    options
}

/// Opens the chosen output: an explicit file, a file under the config's
/// output directory, or stdout.
fn open_output(
    out: &Option<PathBuf>,
    exp: &Experiment,
    default_name: &str,
) -> Result<Box<dyn Write>> {
    let path = match (out, &exp.output_dir) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            Some(dir.join(default_name))
        }
        (None, None) => None,
    };
    match path {
        Some(p) => {
            let file = std::fs::File::create(&p)
                .with_context(|| format!("cannot write {}", p.display()))?;
            eprintln!("writing {}", p.display());
            Ok(Box::new(file))
        }
        None => Ok(Box::new(std::io::stdout())),
    }
}

fn run_optimizer(
    which: OptimizerArg,
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    options: &ModelOptions,
    seed: u64,
    time_limit_s: f64,
) -> std::result::Result<SolveResult, Error> {
    let result = match which {
        OptimizerArg::Uniform => uniform_optimize(task, topo, params, objective, options)?,
        OptimizerArg::Simba => simba_optimize(task, topo, params, objective, options)?,
        OptimizerArg::Ga => {
            let config = GaConfig { seed, ..GaConfig::default() };
            ga_optimize(task, topo, params, objective, options, &config)?
        }
        OptimizerArg::Miqp => miqp_optimize(task, topo, params, objective, options, time_limit_s)?,
    };
    Ok(result)
}

#[derive(Serialize)]
struct OptimizeRow {
    workload: String,
    grid: String,
    #[serde(rename = "type")]
    grid_type: String,
    optimizer: String,
    objective: String,
    latency_s: f64,
    #[serde(rename = "energy_J")]
    energy_j: f64,
    edp: f64,
    normalized_vs_baseline: f64,
    solve_time_s: f64,
}

fn make_row(
    workload: &str,
    spec: &GridSpec,
    optimizer: OptimizerArg,
    objective: ObjectiveArg,
    result: &SolveResult,
    baseline_value: f64,
    hide_wall: bool,
) -> OptimizeRow {
    OptimizeRow {
        workload: workload.to_string(),
        grid: format!("{}x{}", spec.x, spec.y),
        grid_type: spec.grid_type.to_string(),
        optimizer: optimizer.to_string(),
        objective: objective.to_string(),
        latency_s: result.breakdown.latency_s,
        energy_j: result.breakdown.energy_j,
        edp: result.breakdown.edp_js,
        normalized_vs_baseline: result.value / baseline_value,
        // A pinned seed promises byte-identical reruns, so the one
        // wall-clock column is suppressed.
        solve_time_s: if hide_wall { 0.0 } else { result.wall_s },
    }
}

/// `model`: evaluate one workload under one optimizer's partitions and
/// print the full cost breakdown as JSON.
pub fn model(exp: &Experiment, args: &ModelArgs) -> Result<i32> {
    let (name, task) = resolve_workload(&args.source.workload, &args.source.task, exp)?;
    let topo = Topology::build(exp.spec)?;
    let seed = args.seed.or(exp.seed).unwrap_or(0);
    let options = apply_flags(exp.options, args.redistribute, args.async_fuse);
    let result = run_optimizer(
        args.optimizer,
        &task,
        &topo,
        &exp.params,
        args.objective.into(),
        &options,
        seed,
        args.time_limit.unwrap_or(exp.time_limit_s),
    )?;

    #[derive(Serialize)]
    struct ModelReport<'a> {
        workload: &'a str,
        grid: String,
        #[serde(rename = "type")]
        grid_type: String,
        optimizer: String,
        objective: String,
        partitions: &'a [Partition],
        breakdown: &'a mcm_core::CostBreakdown,
    }
    let report = ModelReport {
        workload: &name,
        grid: format!("{}x{}", exp.spec.x, exp.spec.y),
        grid_type: exp.spec.grid_type.to_string(),
        optimizer: args.optimizer.to_string(),
        objective: args.objective.to_string(),
        partitions: &result.partitions,
        breakdown: &result.breakdown,
    };
    let mut out = open_output(&args.out, exp, "model.json")?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(0)
}

/// `optimize`: run the selected optimizers on one workload and write the
/// baseline-normalized comparison CSV.
pub fn optimize(exp: &Experiment, args: &OptimizeArgs) -> Result<i32> {
    let (name, task) = resolve_workload(&args.source.workload, &args.source.task, exp)?;
    let topo = Topology::build(exp.spec)?;
    let seed = args.seed.or(exp.seed);
    let time_limit = args.time_limit.unwrap_or(exp.time_limit_s);
    let objective: Objective = args.objective.into();
    let options = apply_flags(exp.options, args.redistribute, args.async_fuse);

    if let Some(path) = &args.lp_export {
        let model = build_miqp(&task, &topo, &exp.params, objective)?;
        export_lp(&model, path)?;
        eprintln!("wrote LP model to {}", path.display());
    }

    // The uniform split is always the normalization baseline, whether or
    // not its row was requested.
    let baseline = uniform_optimize(&task, &topo, &exp.params, objective, &options)?;
    let mut timed_out = false;
    let mut rows = Vec::new();
    for &which in &args.optimizer {
        let result = if which == OptimizerArg::Uniform {
            baseline.clone()
        } else {
            run_optimizer(
                which,
                &task,
                &topo,
                &exp.params,
                objective,
                &options,
                seed.unwrap_or(0),
                time_limit,
            )?
        };
        if which == OptimizerArg::Miqp && result.status == SolveStatus::FeasibleTimeout {
            timed_out = true;
            eprintln!("warning: miqp hit the {time_limit} s budget; result is feasible, not proven optimal");
        }
        rows.push(make_row(
            &name,
            &exp.spec,
            which,
            args.objective,
            &result,
            baseline.value,
            seed.is_some(),
        ));
    }

    let out = open_output(&args.out, exp, "optimize.csv")?;
    let mut writer = csv::Writer::from_writer(out);
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    if timed_out && args.strict {
        eprintln!("error: solver timeout under --strict");
        return Ok(2);
    }
    Ok(0)
}

/// One sweep cell: a grid shape, packaging type, and memory preset.
struct Cell {
    x: usize,
    y: usize,
    grid_type: GridType,
    memory: &'static str,
    optimizer: OptimizerArg,
}

/// `sweep`: the full comparison matrix of grids x types x memories, one
/// CSV row per cell and optimizer. Cells run concurrently.
pub fn sweep(exp: &Experiment, args: &SweepArgs) -> Result<i32> {
    let (name, task) = resolve_workload(&args.source.workload, &args.source.task, exp)?;
    let seed = args.seed.or(exp.seed);
    let time_limit = args.time_limit.unwrap_or(exp.time_limit_s);
    let objective: Objective = args.objective.into();
    let options = exp.options;

    let mut cells = Vec::new();
    for &side in &args.grids {
        if !(2..=16).contains(&side) {
            bail!("--grids entries must be between 2 and 16, got {side}");
        }
        for grid_type in [GridType::A, GridType::B, GridType::C, GridType::D] {
            for memory in ["dram", "hbm"] {
                for &optimizer in &args.optimizer {
                    cells.push(Cell { x: side, y: side, grid_type, memory, optimizer });
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .context("cannot build worker pool")?;
    let results: Vec<Result<Option<(OptimizeRow, bool)>>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, cell)| sweep_cell(i, cell, &name, &task, objective, &options, seed, time_limit, args.objective))
            .collect()
    });

    let mut timed_out = false;
    let out = open_output(&args.out, exp, "sweep.csv")?;
    let mut writer = csv::Writer::from_writer(out);
    for result in results {
        match result {
            Ok(Some((row, cell_timed_out))) => {
                timed_out |= cell_timed_out;
                writer.serialize(&row)?;
            }
            Ok(None) => {}
            Err(e) => return Err(e),
        }
    }
    writer.flush()?;
    if timed_out && args.strict {
        eprintln!("error: solver timeout under --strict");
        return Ok(2);
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn sweep_cell(
    index: usize,
    cell: &Cell,
    name: &str,
    task: &TaskSequence,
    objective: Objective,
    options: &ModelOptions,
    seed: Option<u64>,
    time_limit: f64,
    objective_arg: ObjectiveArg,
) -> Result<Option<(OptimizeRow, bool)>> {
    let spec = GridSpec::new(cell.x, cell.y, cell.grid_type, false);
    let topo = Topology::build(spec)?;
    let params = memory_preset(cell.memory)?;
    let baseline = uniform_optimize(task, &topo, &params, objective, options)?;
    let cell_seed = seed.unwrap_or(0).wrapping_add(index as u64);
    let run = run_optimizer(
        cell.optimizer,
        task,
        &topo,
        &params,
        objective,
        options,
        cell_seed,
        time_limit,
    );
    let result = match run {
        Ok(r) => r,
        // An oversized exact model is an expected outcome on big grids:
        // note it and keep the rest of the sweep.
        Err(Error::SearchSpaceTooLarge { candidates, limit }) => {
            eprintln!(
                "warning: skipping miqp on {}x{} type {} ({candidates} candidates > {limit})",
                cell.x, cell.y, cell.grid_type
            );
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let row = make_row(
        &format!("{name}/{}", cell.memory),
        &spec,
        cell.optimizer,
        objective_arg,
        &result,
        baseline.value,
        seed.is_some(),
    );
    let cell_timed_out =
        cell.optimizer == OptimizerArg::Miqp && result.status == SolveStatus::FeasibleTimeout;
    Ok(Some((row, cell_timed_out)))
}

/// `pipeline`: schedule a batched run and emit the schedule as CSV.
pub fn pipeline(exp: &Experiment, args: &PipelineArgs) -> Result<i32> {
    let (name, task) = resolve_workload(&args.source.workload, &args.source.task, exp)?;
    let topo = Topology::build(exp.spec)?;
    let seed = args.seed.or(exp.seed).unwrap_or(0);
    let options = apply_flags(exp.options, args.redistribute, args.async_fuse);
    let result = run_optimizer(
        args.optimizer,
        &task,
        &topo,
        &exp.params,
        args.objective.into(),
        &options,
        seed,
        args.time_limit.unwrap_or(exp.time_limit_s),
    )?;
    let batch = BatchSpec::new(args.batch).map_err(|e| anyhow!("{e}"))?;
    let tasks = build_rcpsp(&task, &result.breakdown, batch, args.weights_resident)?;
    let method = match args.method {
        MethodArg::List => ScheduleMethod::List,
        MethodArg::Exact => ScheduleMethod::Exact,
    };
    let sched = schedule(&tasks, method, args.time_limit.unwrap_or(exp.time_limit_s))?;

    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by(|&a, &b| {
        sched.starts[a].total_cmp(&sched.starts[b]).then(a.cmp(&b))
    });
    let out = open_output(&args.out, exp, "pipeline.csv")?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["task", "resource", "start", "end"])?;
    for i in order {
        let t = &tasks[i];
        writer.write_record([
            t.name.clone(),
            t.kind.to_string(),
            format!("{}", sched.starts[i]),
            format!("{}", sched.starts[i] + t.duration),
        ])?;
    }
    writer.flush()?;
    eprintln!(
        "{name}: batch {} makespan {:.6e} s, per-sample speedup {:.3}",
        args.batch,
        sched.makespan,
        per_sample_speedup(&sched, result.breakdown.latency_s, args.batch)
    );
    Ok(0)
}

/// `simulate`: replay a bandwidth scenario and emit the per-link
/// utilization heatmap as CSV.
pub fn simulate(exp: &Experiment, args: &SimulateArgs) -> Result<i32> {
    let scenario = match args.scenario {
        crate::ScenarioArg::Dram => Scenario::Dram,
        crate::ScenarioArg::HbmPeriph => Scenario::HbmPeriph,
        crate::ScenarioArg::HbmCentral => Scenario::HbmCentral,
    };
    let (_, result) = run_scenario(scenario, args.nop_gbps * 1e9)?;
    let out = open_output(&args.out, exp, "simulate.csv")?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["row", "col", "direction", "utilization"])?;
    for (link, util) in &result.utilization {
        let (row, col, direction) = describe_link(*link);
        writer.write_record([
            row.to_string(),
            col.to_string(),
            direction,
            format!("{util}"),
        ])?;
    }
    writer.flush()?;
    eprintln!("completion_s = {}", result.completion_s);
    Ok(0)
}

/// Names a directed link by its source coordinate and compass direction.
/// Memory attach links use the chiplet's coordinate on both ends.
fn describe_link(link: (Node, Node)) -> (usize, usize, String) {
    match link {
        (Node::Memory, Node::Chip((r, c))) => (r, c, "mem-in".into()),
        (Node::Chip((r, c)), Node::Memory) => (r, c, "mem-out".into()),
        (Node::Chip((r1, c1)), Node::Chip((r2, c2))) => {
            let ns = match r2.cmp(&r1) {
                std::cmp::Ordering::Greater => "south",
                std::cmp::Ordering::Less => "north",
                std::cmp::Ordering::Equal => "",
            };
            let ew = match c2.cmp(&c1) {
                std::cmp::Ordering::Greater => "east",
                std::cmp::Ordering::Less => "west",
                std::cmp::Ordering::Equal => "",
            };
            (r1, c1, format!("{ns}{ew}"))
        }
        (Node::Memory, Node::Memory) => unreachable!("no memory-to-memory link exists"),
    }
}
