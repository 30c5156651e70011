//! Batch pipelining as resource-constrained project scheduling.
//!
//! A batched run of an operator sequence is flattened into tasks that
//! compete for two unary resources: one communication channel (off-chip
//! plus on-package movement) and one compute fabric. Samples are
//! independent, so one sample's communication can hide under another's
//! compute. The [`schedule`] entry point offers a priority-list heuristic
//! and, for small instances, a provably optimal branch-and-bound.

use std::time::Instant;

use serde::Serialize;

use crate::costmodel::CostBreakdown;
use crate::error::{Error, Result};
use crate::workload::{BatchSpec, TaskSequence};

/// Sample index used by tasks shared across the whole batch (resident
/// weights).
pub const SHARED_SAMPLE: usize = usize::MAX;

/// Largest task count the exact method accepts.
pub const EXACT_TASK_LIMIT: usize = 24;

/// The two unary resources of the scheduling problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PipeResource {
    Comm,
    Compute,
}

impl std::fmt::Display for PipeResource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipeResource::Comm => write!(f, "comm"),
            PipeResource::Compute => write!(f, "compute"),
        }
    }
}

/// One schedulable unit: a communication or compute phase of one operator
/// for one sample.
#[derive(Debug, Clone, Serialize)]
pub struct PipeTask {
    /// Position in the task list; predecessors refer to these.
    pub id: usize,
    pub name: String,
    /// Owning sample, or [`SHARED_SAMPLE`] for batch-wide tasks.
    pub sample: usize,
    /// Operator index within the sequence.
    pub op: usize,
    pub kind: PipeResource,
    /// Seconds.
    pub duration: f64,
    /// Tasks that must finish before this one starts.
    pub predecessors: Vec<usize>,
}

/// Start time per task plus the resulting makespan.
#[derive(Debug, Clone, Serialize)]
pub struct PipeSchedule {
    /// Seconds, indexed like the task list.
    pub starts: Vec<f64>,
    pub makespan: f64,
}

/// Scheduling method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMethod {
    List,
    Exact,
}

/// Flattens a batched operator sequence into precedence-linked tasks.
///
/// Per sample and per operator this emits an input-communication task
/// (off-chip load plus on-package distribution), a compute task, and an
/// output-communication task (on-package collection plus off-chip store).
/// A chained boundary that the cost model served by on-package
/// redistribution emits a single redistribution task instead of the
/// store/load pair around it. Samples share no edges, which is where the
/// overlap comes from.
///
/// With `weights_resident` set, the weight share of each operator's input
/// movement is split into one batch-wide task per operator that precedes
/// every sample's compute for that operator; the per-sample input task
/// keeps only the activation share.
///
/// The breakdown must come from an evaluation without overlap options so
/// that the per-operator phases are disjoint durations.
pub fn build_rcpsp(
    task: &TaskSequence,
    breakdown: &CostBreakdown,
    batch: BatchSpec,
    weights_resident: bool,
) -> Result<Vec<PipeTask>> {
    if breakdown.per_op.len() != task.ops.len() {
        return Err(Error::InvalidWorkload(format!(
            "{} cost records for {} ops",
            breakdown.per_op.len(),
            task.ops.len()
        )));
    }
    let n_ops = task.ops.len();
    // A chained boundary served by redistribution leaves the producer's
    // redistribution phase non-zero and the surrounding store/load zeroed.
    let redistributed: Vec<bool> = (0..n_ops)
        .map(|i| i + 1 < n_ops && task.chain_prev[i + 1] && breakdown.per_op[i].redistribute_s > 0.0)
        .collect();

    let mut tasks: Vec<PipeTask> = Vec::new();
    let mut push = |name: String, sample, op, kind, duration, predecessors| {
        let id = tasks.len();
        tasks.push(PipeTask { id, name, sample, op, kind, duration, predecessors });
        id
    };

    // Input-movement split: the weight share rides a batch-wide task when
    // weights are resident, proportionally to operand bytes.
    let in_total =
        |i: usize| breakdown.per_op[i].offchip_load_s + breakdown.per_op[i].distribute_s;
    let weight_share = |i: usize| {
        let op = &task.ops[i];
        let frac = op.b_bytes() as f64 / (op.a_bytes() + op.b_bytes()) as f64;
        in_total(i) * frac
    };

    let mut weight_ids: Vec<Option<usize>> = vec![None; n_ops];
    if weights_resident {
        for (i, op) in task.ops.iter().enumerate() {
            let id = push(
                format!("w/{}", op.name),
                SHARED_SAMPLE,
                i,
                PipeResource::Comm,
                weight_share(i),
                Vec::new(),
            );
            weight_ids[i] = Some(id);
        }
    }

    for s in 0..batch.samples {
        // Output-side task of the previous operator in this sample.
        let mut prev_out: Option<usize> = None;
        for (i, op) in task.ops.iter().enumerate() {
            let fed_on_package = i > 0 && redistributed[i - 1];
            let mut compute_preds = Vec::new();
            if fed_on_package {
                // The producer's redistribution task delivers the input.
                compute_preds.push(prev_out.expect("redistributed boundary has a producer"));
            } else {
                let mut load_preds = Vec::new();
                if i > 0 && task.chain_prev[i] {
                    load_preds.push(prev_out.expect("chained boundary has a producer"));
                }
                let load_s = if weights_resident {
                    in_total(i) - weight_share(i)
                } else {
                    in_total(i)
                };
                let load = push(
                    format!("s{s}/{}:load", op.name),
                    s,
                    i,
                    PipeResource::Comm,
                    load_s,
                    load_preds,
                );
                compute_preds.push(load);
            }
            if let Some(w) = weight_ids[i] {
                compute_preds.push(w);
            }
            let compute = push(
                format!("s{s}/{}:compute", op.name),
                s,
                i,
                PipeResource::Compute,
                breakdown.per_op[i].compute_s,
                compute_preds,
            );
            let out = if redistributed[i] {
                push(
                    format!("s{s}/{}:redist", op.name),
                    s,
                    i,
                    PipeResource::Comm,
                    breakdown.per_op[i].redistribute_s,
                    vec![compute],
                )
            } else {
                push(
                    format!("s{s}/{}:store", op.name),
                    s,
                    i,
                    PipeResource::Comm,
                    breakdown.per_op[i].collect_s + breakdown.per_op[i].offchip_store_s,
                    vec![compute],
                )
            };
            prev_out = Some(out);
        }
    }
    Ok(tasks)
}

/// Makespan of running every task back to back: the unpipelined baseline.
pub fn serial_makespan(tasks: &[PipeTask]) -> f64 {
    tasks.iter().map(|t| t.duration).sum()
}

/// Per-sample speedup of a pipelined schedule over serial execution:
/// `batch * serial_sample_s / makespan`. A zero makespan (all-zero
/// durations) degenerates to 1.
pub fn per_sample_speedup(schedule: &PipeSchedule, serial_sample_s: f64, batch: usize) -> f64 {
    if schedule.makespan <= 0.0 {
        return 1.0;
    }
    batch as f64 * serial_sample_s / schedule.makespan
}

/// Schedules the tasks on the two unary resources.
///
/// `List` runs a deterministic priority heuristic: tasks are picked by
/// longest remaining chain (ties by sample, then operator index) and each
/// placed at its earliest feasible start, reusing idle gaps. `Exact` runs
/// a branch-and-bound over task orderings seeded with the list schedule
/// as incumbent; it proves optimality when it finishes within
/// `time_limit_s` and otherwise returns the best schedule found.
pub fn schedule(
    tasks: &[PipeTask],
    method: ScheduleMethod,
    time_limit_s: f64,
) -> Result<PipeSchedule> {
    check_tasks(tasks)?;
    let succs = successors(tasks);
    topo_order(tasks, &succs)?;
    let list = list_schedule(tasks, &succs);
    match method {
        ScheduleMethod::List => Ok(list),
        ScheduleMethod::Exact => {
            if tasks.len() > EXACT_TASK_LIMIT {
                return Err(Error::SearchSpaceTooLarge {
                    candidates: tasks.len() as u64,
                    limit: EXACT_TASK_LIMIT as u64,
                });
            }
            Ok(branch_and_bound(tasks, &succs, list, time_limit_s))
        }
    }
}

/// Checks a schedule against the task list: precedence respected, tasks of
/// one resource never overlapping, makespan equal to the last finish.
pub fn validate_schedule(tasks: &[PipeTask], schedule: &PipeSchedule) -> Result<()> {
    check_tasks(tasks)?;
    if schedule.starts.len() != tasks.len() {
        return Err(Error::InvalidWorkload(format!(
            "{} start times for {} tasks",
            schedule.starts.len(),
            tasks.len()
        )));
    }
    let finish = |t: &PipeTask| schedule.starts[t.id] + t.duration;
    for t in tasks {
        for &p in &t.predecessors {
            if schedule.starts[t.id] < finish(&tasks[p]) {
                return Err(Error::InvalidWorkload(format!(
                    "'{}' starts before '{}' finishes",
                    t.name, tasks[p].name
                )));
            }
        }
    }
    for a in tasks {
        for b in tasks {
            // Exclusive use means disjoint open intervals; a zero-duration
            // task holds the resource for no time and conflicts with nothing.
            if a.id < b.id && a.kind == b.kind && a.duration > 0.0 && b.duration > 0.0 {
                let overlap = schedule.starts[a.id] < finish(b) && schedule.starts[b.id] < finish(a);
                if overlap {
                    return Err(Error::InvalidWorkload(format!(
                        "'{}' and '{}' overlap on {}",
                        a.name, b.name, a.kind
                    )));
                }
            }
        }
    }
    let max_finish = tasks.iter().map(|t| finish(t)).fold(0.0, f64::max);
    if schedule.makespan != max_finish {
        return Err(Error::InvalidWorkload(format!(
            "makespan {} but last finish {}",
            schedule.makespan, max_finish
        )));
    }
    Ok(())
}

fn check_tasks(tasks: &[PipeTask]) -> Result<()> {
    for (i, t) in tasks.iter().enumerate() {
        if t.id != i {
            return Err(Error::InvalidWorkload(format!(
                "task '{}' has id {} at position {}",
                t.name, t.id, i
            )));
        }
        if !(t.duration >= 0.0) {
            return Err(Error::InvalidWorkload(format!(
                "task '{}' has negative or NaN duration",
                t.name
            )));
        }
        for &p in &t.predecessors {
            if p >= tasks.len() {
                return Err(Error::InvalidWorkload(format!(
                    "task '{}' depends on missing task {p}",
                    t.name
                )));
            }
        }
    }
    Ok(())
}

fn successors(tasks: &[PipeTask]) -> Vec<Vec<usize>> {
    let mut succs = vec![Vec::new(); tasks.len()];
    for t in tasks {
        for &p in &t.predecessors {
            succs[p].push(t.id);
        }
    }
    succs
}

fn topo_order(tasks: &[PipeTask], succs: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut indeg: Vec<usize> = tasks.iter().map(|t| t.predecessors.len()).collect();
    let mut queue: Vec<usize> = (0..tasks.len()).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(tasks.len());
    while let Some(i) = queue.pop() {
        order.push(i);
        for &s in &succs[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                queue.push(s);
            }
        }
    }
    if order.len() != tasks.len() {
        return Err(Error::InvalidWorkload("precedence cycle".into()));
    }
    Ok(order)
}

/// Longest chain starting at each task, own duration included.
fn tails(tasks: &[PipeTask], succs: &[Vec<usize>]) -> Vec<f64> {
    let order = topo_order(tasks, succs).expect("checked acyclic");
    let mut tail = vec![0.0; tasks.len()];
    for &i in order.iter().rev() {
        let downstream = succs[i].iter().map(|&s| tail[s]).fold(0.0, f64::max);
        tail[i] = tasks[i].duration + downstream;
    }
    tail
}

/// Earliest start at or after `ready` where `dur` fits between the busy
/// intervals (sorted, disjoint).
fn earliest_fit(busy: &[(f64, f64)], ready: f64, dur: f64) -> f64 {
    let mut t = ready;
    for &(s, e) in busy {
        if t + dur <= s {
            break;
        }
        t = t.max(e);
    }
    t
}

fn occupy(busy: &mut Vec<(f64, f64)>, start: f64, dur: f64) {
    if dur > 0.0 {
        let pos = busy.partition_point(|&(s, _)| s < start);
        busy.insert(pos, (start, start + dur));
    }
}

fn release(busy: &mut Vec<(f64, f64)>, start: f64, dur: f64) {
    if dur > 0.0 {
        let pos = busy.iter().position(|&(s, e)| s == start && e == start + dur);
        busy.remove(pos.expect("interval was occupied"));
    }
}

fn list_schedule(tasks: &[PipeTask], succs: &[Vec<usize>]) -> PipeSchedule {
    let tail = tails(tasks, succs);
    let n = tasks.len();
    let mut starts = vec![0.0; n];
    let mut done = vec![false; n];
    let mut busy: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut makespan = 0.0f64;
    for _ in 0..n {
        let pick = (0..n)
            .filter(|&i| !done[i] && tasks[i].predecessors.iter().all(|&p| done[p]))
            .max_by(|&a, &b| {
                tail[a]
                    .total_cmp(&tail[b])
                    .then_with(|| tasks[b].sample.cmp(&tasks[a].sample))
                    .then_with(|| tasks[b].op.cmp(&tasks[a].op))
                    .then_with(|| b.cmp(&a))
            })
            .expect("acyclic graph always has an eligible task");
        let ready = tasks[pick]
            .predecessors
            .iter()
            .map(|&p| starts[p] + tasks[p].duration)
            .fold(0.0, f64::max);
        let lane = tasks[pick].kind as usize;
        let start = earliest_fit(&busy[lane], ready, tasks[pick].duration);
        occupy(&mut busy[lane], start, tasks[pick].duration);
        starts[pick] = start;
        done[pick] = true;
        makespan = makespan.max(start + tasks[pick].duration);
    }
    PipeSchedule { starts, makespan }
}

struct Bnb<'a> {
    tasks: &'a [PipeTask],
    order: Vec<usize>,
    tail: Vec<f64>,
    /// Lowest-numbered sample with an identical task signature.
    twin_rep: Vec<usize>,
    sample_of: Vec<usize>,
    progress: Vec<usize>,
    starts: Vec<f64>,
    done: Vec<bool>,
    busy: [Vec<(f64, f64)>; 2],
    makespan: f64,
    resource_floor: f64,
    best_starts: Vec<f64>,
    best_makespan: f64,
    deadline: Instant,
    nodes: u64,
    timed_out: bool,
}

fn branch_and_bound(
    tasks: &[PipeTask],
    succs: &[Vec<usize>],
    incumbent: PipeSchedule,
    time_limit_s: f64,
) -> PipeSchedule {
    let n = tasks.len();
    let mut lane_work = [0.0f64; 2];
    for t in tasks {
        lane_work[t.kind as usize] += t.duration;
    }
    let resource_floor = lane_work[0].max(lane_work[1]);
    if incumbent.makespan <= resource_floor || time_limit_s <= 0.0 {
        // Already provably optimal, or no budget to search.
        return incumbent;
    }

    // Samples with identical task structure are interchangeable; opening a
    // fresh sample always prefers the lowest-numbered twin.
    let samples: Vec<usize> = {
        let mut s: Vec<usize> =
            tasks.iter().map(|t| t.sample).filter(|&s| s != SHARED_SAMPLE).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let signature = |sample: usize| -> Vec<(usize, u8, u64)> {
        tasks
            .iter()
            .filter(|t| t.sample == sample)
            .map(|t| (t.op, t.kind as u8, t.duration.to_bits()))
            .collect()
    };
    let sigs: Vec<Vec<(usize, u8, u64)>> = samples.iter().map(|&s| signature(s)).collect();
    let max_sample = samples.iter().copied().max().map_or(0, |m| m + 1);
    let mut twin_rep = vec![usize::MAX; max_sample];
    for (i, &s) in samples.iter().enumerate() {
        let rep = (0..=i).find(|&j| sigs[j] == sigs[i]).unwrap();
        twin_rep[s] = samples[rep];
    }

    let deadline = Instant::now()
        + std::time::Duration::from_secs_f64(time_limit_s.clamp(0.0, 86_400.0));
    let mut bnb = Bnb {
        tasks,
        order: topo_order(tasks, succs).expect("checked acyclic"),
        tail: tails(tasks, succs),
        twin_rep,
        sample_of: tasks.iter().map(|t| t.sample).collect(),
        progress: vec![0; max_sample],
        starts: vec![0.0; n],
        done: vec![false; n],
        busy: [Vec::new(), Vec::new()],
        makespan: 0.0,
        resource_floor,
        best_starts: incumbent.starts,
        best_makespan: incumbent.makespan,
        deadline,
        nodes: 0,
        timed_out: false,
    };
    bnb.dfs(0);
    PipeSchedule { starts: bnb.best_starts, makespan: bnb.best_makespan }
}

impl Bnb<'_> {
    fn dfs(&mut self, scheduled: usize) {
        self.nodes += 1;
        if self.nodes % 1024 == 0 && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        if self.timed_out || self.best_makespan <= self.resource_floor {
            return;
        }
        let n = self.tasks.len();
        if scheduled == n {
            if self.makespan < self.best_makespan {
                self.best_makespan = self.makespan;
                self.best_starts.copy_from_slice(&self.starts);
            }
            return;
        }
        if self.lower_bound() >= self.best_makespan {
            return;
        }
        let mut eligible: Vec<usize> = (0..n)
            .filter(|&i| {
                !self.done[i] && self.tasks[i].predecessors.iter().all(|&p| self.done[p])
            })
            .filter(|&i| {
                let s = self.sample_of[i];
                if s == SHARED_SAMPLE || self.progress[s] > 0 {
                    return true;
                }
                // Fresh sample: only its lowest-numbered untouched twin opens.
                let rep = self.twin_rep[s];
                (rep..s).all(|t| {
                    t >= self.twin_rep.len()
                        || self.twin_rep[t] != rep
                        || self.progress[t] > 0
                })
            })
            .collect();
        eligible.sort_by(|&a, &b| {
            self.tail[b]
                .total_cmp(&self.tail[a])
                .then_with(|| self.tasks[a].sample.cmp(&self.tasks[b].sample))
                .then_with(|| self.tasks[a].op.cmp(&self.tasks[b].op))
                .then_with(|| a.cmp(&b))
        });
        for pick in eligible {
            let ready = self.tasks[pick]
                .predecessors
                .iter()
                .map(|&p| self.starts[p] + self.tasks[p].duration)
                .fold(0.0, f64::max);
            let lane = self.tasks[pick].kind as usize;
            let dur = self.tasks[pick].duration;
            let start = earliest_fit(&self.busy[lane], ready, dur);
            let saved_makespan = self.makespan;
            occupy(&mut self.busy[lane], start, dur);
            self.starts[pick] = start;
            self.done[pick] = true;
            if self.sample_of[pick] != SHARED_SAMPLE {
                self.progress[self.sample_of[pick]] += 1;
            }
            self.makespan = self.makespan.max(start + dur);

            self.dfs(scheduled + 1);

            self.makespan = saved_makespan;
            if self.sample_of[pick] != SHARED_SAMPLE {
                self.progress[self.sample_of[pick]] -= 1;
            }
            self.done[pick] = false;
            release(&mut self.busy[lane], start, dur);
            if self.timed_out {
                return;
            }
        }
    }

    /// Bound over the unscheduled remainder: the critical path (every
    /// task's earliest start given the fixed part, plus its longest
    /// chain), and per lane the earliest point its remaining work can
    /// begin plus that work run back to back.
    fn lower_bound(&self) -> f64 {
        let mut bound = self.makespan.max(self.resource_floor);
        let mut est = vec![0.0f64; self.tasks.len()];
        let mut lane_left = [0.0f64; 2];
        let mut lane_front = [f64::INFINITY; 2];
        for &i in &self.order {
            if self.done[i] {
                est[i] = self.starts[i];
                continue;
            }
            est[i] = self.tasks[i]
                .predecessors
                .iter()
                .map(|&p| est[p] + self.tasks[p].duration)
                .fold(0.0, f64::max);
            bound = bound.max(est[i] + self.tail[i]);
            if self.tasks[i].duration > 0.0 {
                let lane = self.tasks[i].kind as usize;
                lane_left[lane] += self.tasks[i].duration;
                lane_front[lane] = lane_front[lane].min(est[i]);
            }
        }
        for lane in 0..2 {
            if lane_left[lane] > 0.0 {
                bound = bound.max(lane_front[lane] + lane_left[lane]);
            }
        }
        bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{end_to_end, CostParams, ModelOptions, Partition};
    use crate::optimize::uniform_partition;
    use crate::topology::{GridSpec, GridType, Topology};
    use crate::workload::{gemm_chain, GemmOp};
    use approx::assert_relative_eq;

    /// One sample's chain with the given phase durations.
    fn chain(sample: usize, phases: &[(PipeResource, f64)], base: usize) -> Vec<PipeTask> {
        phases
            .iter()
            .enumerate()
            .map(|(i, &(kind, duration))| PipeTask {
                id: base + i,
                name: format!("s{sample}/t{i}"),
                sample,
                op: i,
                kind,
                duration,
                predecessors: if i == 0 { vec![] } else { vec![base + i - 1] },
            })
            .collect()
    }

    /// The canonical two-sample instance: load 2 s, compute 3 s, store 1 s.
    fn two_samples() -> Vec<PipeTask> {
        use PipeResource::{Comm, Compute};
        let phases = [(Comm, 2.0), (Compute, 3.0), (Comm, 1.0)];
        let mut tasks = chain(0, &phases, 0);
        tasks.extend(chain(1, &phases, 3));
        tasks
    }

    fn batched(b: usize) -> Vec<PipeTask> {
        use PipeResource::{Comm, Compute};
        let phases = [(Comm, 2.0), (Compute, 3.0), (Comm, 1.0)];
        let mut tasks = Vec::new();
        for s in 0..b {
            tasks.extend(chain(s, &phases, s * 3));
        }
        tasks
    }

    #[test]
    fn single_chain_runs_serially() {
        let tasks = batched(1);
        let s = schedule(&tasks, ScheduleMethod::List, 10.0).unwrap();
        assert_eq!(s.makespan, 6.0);
        validate_schedule(&tasks, &s).unwrap();
        assert_relative_eq!(per_sample_speedup(&s, 6.0, 1), 1.0);
    }

    #[test]
    fn two_samples_pipeline_from_twelve_to_nine() {
        let tasks = two_samples();
        assert_eq!(serial_makespan(&tasks), 12.0);
        let list = schedule(&tasks, ScheduleMethod::List, 10.0).unwrap();
        let exact = schedule(&tasks, ScheduleMethod::Exact, 10.0).unwrap();
        validate_schedule(&tasks, &list).unwrap();
        validate_schedule(&tasks, &exact).unwrap();
        assert_eq!(exact.makespan, 9.0);
        assert_eq!(list.makespan, 9.0);
        assert_relative_eq!(per_sample_speedup(&exact, 6.0, 2), 12.0 / 9.0);
    }

    #[test]
    fn exact_matches_an_ordering_oracle_on_the_six_task_instance() {
        // Every precedence-feasible insertion order, each placed greedily,
        // covers the optimum; the branch-and-bound must agree.
        let tasks = two_samples();
        let mut best = f64::INFINITY;
        let mut stack: Vec<(Vec<usize>, Vec<bool>)> = vec![(Vec::new(), vec![false; 6])];
        while let Some((order, done)) = stack.pop() {
            if order.len() == 6 {
                let mut busy: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
                let mut starts = vec![0.0; 6];
                let mut makespan = 0.0f64;
                for &i in &order {
                    let ready = tasks[i]
                        .predecessors
                        .iter()
                        .map(|&p| starts[p] + tasks[p].duration)
                        .fold(0.0, f64::max);
                    let st = earliest_fit(&busy[tasks[i].kind as usize], ready, tasks[i].duration);
                    occupy(&mut busy[tasks[i].kind as usize], st, tasks[i].duration);
                    starts[i] = st;
                    makespan = makespan.max(st + tasks[i].duration);
                }
                best = best.min(makespan);
                continue;
            }
            for i in 0..6 {
                if !done[i] && tasks[i].predecessors.iter().all(|&p| done[p]) {
                    let mut order = order.clone();
                    let mut done = done.clone();
                    order.push(i);
                    done[i] = true;
                    stack.push((order, done));
                }
            }
        }
        assert_eq!(best, 9.0);
        let exact = schedule(&tasks, ScheduleMethod::Exact, 10.0).unwrap();
        assert_eq!(exact.makespan, best);
    }

    #[test]
    fn steady_state_approaches_the_resource_bound() {
        // Bottleneck per sample is max(2 + 1, 3) = 3 s; the pipeline fills
        // in a constant 3 s, so b samples take 3b + 3.
        for b in 1..=4 {
            let tasks = batched(b);
            let s = schedule(&tasks, ScheduleMethod::Exact, 30.0).unwrap();
            validate_schedule(&tasks, &s).unwrap();
            assert_eq!(s.makespan, 3.0 * b as f64 + 3.0, "batch {b}");
            assert!(s.makespan >= 3.0 * b as f64);
        }
    }

    #[test]
    fn exact_refuses_oversized_instances() {
        let tasks = batched(9); // 27 tasks
        match schedule(&tasks, ScheduleMethod::Exact, 10.0) {
            Err(Error::SearchSpaceTooLarge { candidates, limit }) => {
                assert_eq!(candidates, 27);
                assert_eq!(limit, EXACT_TASK_LIMIT as u64);
            }
            other => panic!("expected a size refusal, got {other:?}"),
        }
    }

    #[test]
    fn zero_budget_returns_the_list_incumbent() {
        let tasks = batched(4);
        let list = schedule(&tasks, ScheduleMethod::List, 10.0).unwrap();
        let capped = schedule(&tasks, ScheduleMethod::Exact, 0.0).unwrap();
        assert_eq!(capped.makespan, list.makespan);
        assert_eq!(capped.starts, list.starts);
    }

    #[test]
    fn independent_ops_overlap_within_one_sample() {
        use PipeResource::{Comm, Compute};
        // Two unchained ops in one sample: the second load has no
        // predecessor, so it hides under the first compute.
        let mut tasks = chain(0, &[(Comm, 2.0), (Compute, 3.0), (Comm, 1.0)], 0);
        let mut second = chain(0, &[(Comm, 2.0), (Compute, 3.0), (Comm, 1.0)], 3);
        for t in &mut second {
            t.op += 3;
        }
        tasks.append(&mut second);
        let list = schedule(&tasks, ScheduleMethod::List, 10.0).unwrap();
        validate_schedule(&tasks, &list).unwrap();
        assert!(list.makespan < serial_makespan(&tasks));
        assert_eq!(list.makespan, 9.0);
    }

    #[test]
    fn cycles_are_rejected() {
        let mut tasks = two_samples();
        tasks[0].predecessors = vec![2];
        assert!(matches!(
            schedule(&tasks, ScheduleMethod::List, 1.0),
            Err(Error::InvalidWorkload(_))
        ));
    }

    fn model_tasks(batch: usize, resident: bool) -> (TaskSequence, Vec<PipeTask>) {
        let task = gemm_chain(2, 64);
        let topo = Topology::build(GridSpec::new(2, 2, GridType::A, false)).unwrap();
        let params = CostParams::hbm_defaults();
        let parts: Vec<Partition> = task
            .ops
            .iter()
            .map(|op| uniform_partition(op, 2, 2, params.r, params.c))
            .collect();
        let options = ModelOptions { redistribute: false, async_fuse: false };
        let breakdown = end_to_end(&task, &parts, &topo, &params, &options).unwrap();
        let tasks =
            build_rcpsp(&task, &breakdown, BatchSpec::new(batch).unwrap(), resident).unwrap();
        (task, tasks)
    }

    #[test]
    fn construction_emits_three_tasks_per_op_per_sample() {
        let (task, tasks) = model_tasks(2, false);
        assert_eq!(tasks.len(), 2 * task.ops.len() * 3);
        // No cross-sample edges.
        for t in &tasks {
            for &p in &t.predecessors {
                assert_eq!(tasks[p].sample, t.sample);
            }
        }
        // The batch serial time is the per-sample serial time doubled.
        let one = model_tasks(1, false).1;
        assert_relative_eq!(
            serial_makespan(&tasks),
            2.0 * serial_makespan(&one),
            max_relative = 1e-12
        );
    }

    #[test]
    fn serial_time_matches_the_cost_model() {
        let task = gemm_chain(2, 64);
        let topo = Topology::build(GridSpec::new(2, 2, GridType::A, false)).unwrap();
        let params = CostParams::hbm_defaults();
        let parts: Vec<Partition> = task
            .ops
            .iter()
            .map(|op| uniform_partition(op, 2, 2, params.r, params.c))
            .collect();
        let options = ModelOptions { redistribute: false, async_fuse: false };
        let breakdown = end_to_end(&task, &parts, &topo, &params, &options).unwrap();
        let tasks = build_rcpsp(&task, &breakdown, BatchSpec::new(1).unwrap(), false).unwrap();
        assert_relative_eq!(serial_makespan(&tasks), breakdown.latency_s, max_relative = 1e-12);
    }

    #[test]
    fn resident_weights_are_loaded_once_per_op() {
        let (task, tasks) = model_tasks(3, true);
        let shared: Vec<&PipeTask> =
            tasks.iter().filter(|t| t.sample == SHARED_SAMPLE).collect();
        assert_eq!(shared.len(), task.ops.len());
        for w in &shared {
            assert_eq!(w.kind, PipeResource::Comm);
            // Predecessor of every sample's compute for that operator.
            let dependents = tasks
                .iter()
                .filter(|t| {
                    t.kind == PipeResource::Compute
                        && t.op == w.op
                        && t.predecessors.contains(&w.id)
                })
                .count();
            assert_eq!(dependents, 3);
        }
        // Activation share plus weight share add back to the full input time.
        let full = model_tasks(1, false).1;
        let in_time = |ts: &[PipeTask], op: usize| -> f64 {
            ts.iter()
                .filter(|t| {
                    t.op == op && t.kind == PipeResource::Comm && (t.sample == 0 || t.sample == SHARED_SAMPLE)
                })
                .filter(|t| !t.name.ends_with(":store"))
                .map(|t| t.duration)
                .sum()
        };
        for op in 0..task.ops.len() {
            assert_relative_eq!(in_time(&tasks, op), in_time(&full, op), max_relative = 1e-12);
        }
    }

    #[test]
    fn redistributed_boundaries_skip_the_memory_round_trip() {
        let task = gemm_chain(2, 64);
        let topo = Topology::build(GridSpec::new(2, 2, GridType::A, false)).unwrap();
        let params = CostParams::dram_defaults();
        let parts: Vec<Partition> = task
            .ops
            .iter()
            .map(|op| uniform_partition(op, 2, 2, params.r, params.c))
            .collect();
        let options = ModelOptions { redistribute: true, async_fuse: false };
        let breakdown = end_to_end(&task, &parts, &topo, &params, &options).unwrap();
        assert!(breakdown.per_op[0].redistribute_s > 0.0, "boundary should redistribute");
        let tasks =
            build_rcpsp(&task, &breakdown, BatchSpec::new(2).unwrap(), false).unwrap();
        // Five tasks per sample: load, compute, redist, compute, store.
        assert_eq!(tasks.len(), 10);
        let redists: Vec<&PipeTask> =
            tasks.iter().filter(|t| t.name.ends_with(":redist")).collect();
        assert_eq!(redists.len(), 2);
        for r in redists {
            // Output of the producer's compute, input of the consumer's.
            assert_eq!(r.op, 0);
            let consumer = tasks
                .iter()
                .find(|t| {
                    t.sample == r.sample && t.op == 1 && t.kind == PipeResource::Compute
                })
                .unwrap();
            assert_eq!(consumer.predecessors, vec![r.id]);
        }
        assert_relative_eq!(
            serial_makespan(&tasks),
            2.0 * breakdown.latency_s,
            max_relative = 1e-12
        );
    }

    #[test]
    fn methods_keep_their_ordering_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let b = rng.gen_range(1..=3);
            let ops = rng.gen_range(1..=2);
            let mut tasks = Vec::new();
            for s in 0..b {
                let mut phases = Vec::new();
                for _ in 0..ops {
                    phases.push((PipeResource::Comm, rng.gen_range(0..=8) as f64 * 0.25));
                    phases.push((PipeResource::Compute, rng.gen_range(0..=8) as f64 * 0.25));
                    phases.push((PipeResource::Comm, rng.gen_range(0..=8) as f64 * 0.25));
                }
                tasks.extend(chain(s, &phases, tasks.len()));
            }
            let serial = serial_makespan(&tasks);
            let list = schedule(&tasks, ScheduleMethod::List, 5.0).unwrap();
            // A tight budget still upholds every invariant below: the
            // search starts from the list schedule as incumbent.
            let exact = schedule(&tasks, ScheduleMethod::Exact, 0.2).unwrap();
            validate_schedule(&tasks, &list).unwrap();
            validate_schedule(&tasks, &exact).unwrap();
            let mut lane_work = [0.0f64; 2];
            for t in &tasks {
                lane_work[t.kind as usize] += t.duration;
            }
            assert!(exact.makespan <= list.makespan + 1e-12);
            assert!(list.makespan <= serial + 1e-12);
            assert!(exact.makespan + 1e-12 >= lane_work[0].max(lane_work[1]));
        }
    }

    #[test]
    fn weight_task_gates_every_sample() {
        use PipeResource::{Comm, Compute};
        // A resident weight longer than everything else forces both
        // computes after it; the schedulers must respect the shared edge.
        let tasks = vec![
            PipeTask {
                id: 0,
                name: "w/op".into(),
                sample: SHARED_SAMPLE,
                op: 0,
                kind: Comm,
                duration: 5.0,
                predecessors: vec![],
            },
            PipeTask {
                id: 1,
                name: "s0/op:load".into(),
                sample: 0,
                op: 0,
                kind: Comm,
                duration: 1.0,
                predecessors: vec![],
            },
            PipeTask {
                id: 2,
                name: "s0/op:compute".into(),
                sample: 0,
                op: 0,
                kind: Compute,
                duration: 2.0,
                predecessors: vec![1, 0],
            },
            PipeTask {
                id: 3,
                name: "s1/op:load".into(),
                sample: 1,
                op: 0,
                kind: Comm,
                duration: 1.0,
                predecessors: vec![],
            },
            PipeTask {
                id: 4,
                name: "s1/op:compute".into(),
                sample: 1,
                op: 0,
                kind: Compute,
                duration: 2.0,
                predecessors: vec![3, 0],
            },
        ];
        for method in [ScheduleMethod::List, ScheduleMethod::Exact] {
            let s = schedule(&tasks, method, 10.0).unwrap();
            validate_schedule(&tasks, &s).unwrap();
            assert!(s.starts[2] >= 5.0 && s.starts[4] >= 5.0);
        }
    }
}
