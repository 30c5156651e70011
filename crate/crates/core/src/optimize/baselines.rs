//! Closed-form partition baselines: the even split and a
//! distance-weighted split that loads rows and columns inversely to how
//! far they sit from their memory attach point.

use std::time::Instant;

use crate::costmodel::{self, CostParams, ModelOptions, Partition};
use crate::error::Result;
use crate::topology::Topology;
use crate::workload::{GemmOp, TaskSequence};

use super::{axis_bounds, Objective, SolveResult, SolveStatus};

/// Splits both dimensions as evenly as the unit lattice allows: units go
/// round-robin starting at row 0, and the division remainder rides on
/// row 0. A dimension smaller than one unit lands entirely on row 0.
pub fn uniform_partition(op: &GemmOp, x: usize, y: usize, r: u64, c: u64) -> Partition {
    let bx = axis_bounds(op.m, x, r);
    let by = axis_bounds(op.n, y, c);
    Partition::new(bx.decode(&bx.even_units()), by.decode(&by.even_units()))
}

/// Distance-weighted split: each grid row is weighted by
/// `1/(1 + d)` where `d` is the smallest row offset to a memory attach
/// point among the row's chiplets, the weighted shares are rounded to
/// whole units so the unit total is exact (largest fractional share
/// first), and the largest entry absorbs the final sub-unit remainder.
/// Columns mirror this with column offsets. With equal weights the
/// result coincides with the even split.
pub fn simba_partition(op: &GemmOp, topo: &Topology, r: u64, c: u64) -> Partition {
    let x = topo.spec().x;
    let y = topo.spec().y;
    let local = |gx: usize, gy: usize| topo.local_index((gx, gy)).expect("chiplet in grid");
    let row_dist = |gx: usize| (0..y).map(|gy| local(gx, gy).0).min().unwrap();
    let col_dist = |gy: usize| (0..x).map(|gx| local(gx, gy).1).min().unwrap();
    let wx: Vec<f64> = (0..x).map(|gx| 1.0 / (1.0 + row_dist(gx) as f64)).collect();
    let wy: Vec<f64> = (0..y).map(|gy| 1.0 / (1.0 + col_dist(gy) as f64)).collect();
    Partition::new(weighted_split(op.m, &wx, r), weighted_split(op.n, &wy, c))
}

fn weighted_split(m: u64, weights: &[f64], step: u64) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let q_units = m / step;
    let raw: Vec<f64> = weights.iter().map(|w| m as f64 * w / total / step as f64).collect();
    let mut units: Vec<u64> = raw.iter().map(|&r| (r.floor() as u64).min(q_units)).collect();
    // Hand the remaining whole units to the rows that lost the most to
    // flooring; ties go to the lowest row.
    let leftover = q_units - units.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    for k in 0..leftover as usize {
        units[order[k % order.len()]] += 1;
    }
    let mut split: Vec<u64> = units.iter().map(|&u| u * step).collect();
    // The sub-unit remainder rides on the largest entry (lowest row on
    // ties), mirroring where the most work already sits.
    let rem = m % step;
    if rem > 0 {
        let largest = (0..split.len()).max_by_key(|&i| (split[i], usize::MAX - i)).unwrap();
        split[largest] += rem;
    }
    split
}

/// Evaluates the even split as a [`SolveResult`]. Closed form, so the
/// status is `Optimal`: the output is the baseline's definition.
pub fn uniform_optimize(
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    options: &ModelOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    let parts: Vec<Partition> = task
        .ops
        .iter()
        .map(|op| uniform_partition(op, topo.spec().x, topo.spec().y, params.r, params.c))
        .collect();
    finish(task, parts, topo, params, objective, options, start)
}

/// Evaluates the distance-weighted split as a [`SolveResult`].
pub fn simba_optimize(
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    options: &ModelOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    let parts: Vec<Partition> =
        task.ops.iter().map(|op| simba_partition(op, topo, params.r, params.c)).collect();
    finish(task, parts, topo, params, objective, options, start)
}

fn finish(
    task: &TaskSequence,
    parts: Vec<Partition>,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    options: &ModelOptions,
    start: Instant,
) -> Result<SolveResult> {
    let breakdown = costmodel::end_to_end(task, &parts, topo, params, options)?;
    Ok(SolveResult {
        partitions: parts,
        gathers: Vec::new(),
        objective,
        value: objective.value_of(&breakdown),
        model_value: None,
        breakdown,
        wall_s: start.elapsed().as_secs_f64(),
        status: SolveStatus::Optimal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{GridSpec, GridType};

    fn topo(x: usize, y: usize, t: GridType) -> Topology {
        Topology::build(GridSpec::new(x, y, t, false)).unwrap()
    }

    #[test]
    fn uniform_splits_evenly_with_remainder_on_row_zero() {
        let op = GemmOp::new("g", 64, 16, 64);
        let p = uniform_partition(&op, 4, 4, 16, 16);
        assert_eq!(p.px, vec![16, 16, 16, 16]);

        let op = GemmOp::new("g", 80, 16, 64);
        let p = uniform_partition(&op, 4, 4, 16, 16);
        assert_eq!(p.px, vec![32, 16, 16, 16]);

        let op = GemmOp::new("g", 8, 16, 64);
        let p = uniform_partition(&op, 4, 4, 16, 16);
        assert_eq!(p.px, vec![8, 0, 0, 0]);
    }

    #[test]
    fn uniform_carries_the_sub_unit_remainder_on_row_zero() {
        let op = GemmOp::new("g", 72, 16, 72);
        let p = uniform_partition(&op, 4, 4, 16, 16);
        assert_eq!(p.px, vec![24, 16, 16, 16]);
        assert_eq!(p.py, vec![24, 16, 16, 16]);
    }

    #[test]
    fn simba_weights_rows_by_attach_distance() {
        // Corner attach, two rows: weights 1 and 1/2 put two thirds of
        // the work on the near row.
        let t = topo(2, 2, GridType::A);
        let op = GemmOp::new("g", 96, 16, 32);
        let p = simba_partition(&op, &t, 16, 16);
        assert_eq!(p.px, vec![64, 32]);
    }

    #[test]
    fn simba_rounds_and_repairs_to_the_exact_sum() {
        // Weights 1, 1/2, 1/3, 1/4 over 64 rows: raw shares 30.72,
        // 15.36, 10.24, 7.68 round to 32, 16, 16, 0 — already exact.
        let t = topo(4, 4, GridType::A);
        let op = GemmOp::new("g", 64, 16, 64);
        let p = simba_partition(&op, &t, 16, 16);
        assert_eq!(p.px, vec![32, 16, 16, 0]);
        assert_eq!(p.px.iter().sum::<u64>(), 64);
    }

    #[test]
    fn simba_equals_uniform_when_every_row_touches_memory() {
        // One attach point per row: all row distances are zero.
        let t = topo(4, 4, GridType::B);
        for m in [64u64, 80, 96, 128] {
            let op = GemmOp::new("g", m, 16, 64);
            let simba = simba_partition(&op, &t, 16, 16);
            let uniform = uniform_partition(&op, 4, 4, 16, 16);
            assert_eq!(simba.px, uniform.px, "m = {m}");
        }
    }

    #[test]
    fn baseline_partitions_always_validate() {
        for t in [GridType::A, GridType::B, GridType::C, GridType::D] {
            let topo = topo(4, 4, t);
            for m in [8u64, 16, 40, 64, 80, 100, 256] {
                let op = GemmOp::new("g", m, 32, m);
                for p in
                    [uniform_partition(&op, 4, 4, 16, 16), simba_partition(&op, &topo, 16, 16)]
                {
                    p.validate(&op, 4, 4, 16, 16).unwrap();
                }
            }
        }
    }

    #[test]
    fn baseline_results_report_their_own_cost() {
        let t = topo(4, 4, GridType::A);
        let task = crate::workload::gemm_chain(2, 64);
        let params = CostParams::dram_defaults();
        let r = uniform_optimize(&task, &t, &params, Objective::Latency, &ModelOptions::default())
            .unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.value, r.breakdown.latency_s);
        assert_eq!(r.partitions.len(), 2);

        let r = simba_optimize(&task, &t, &params, Objective::Edp, &ModelOptions::default())
            .unwrap();
        assert_eq!(r.value, r.breakdown.edp_js);
    }
}
