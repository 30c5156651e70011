//! Analytical latency, energy, and EDP for partitioned operator sequences.
//!
//! Each operator's output is partitioned over the chiplet grid: `px[x]` rows
//! of the output are produced by grid row `x` and `py[y]` columns by grid
//! column `y`, so chiplet `(x, y)` computes a `px[x] * py[y]` block on its
//! R-by-C output-stationary systolic array. An operator executes in up to
//! five steps: off-chip load, on-package distribution, compute, on-package
//! collection, off-chip store. Distribution cost depends on the bandwidth
//! regime: when memory is the bottleneck (`LowBw`) data trickles along
//! shortest paths without contention; when memory outpaces the package links
//! (`HighBw`) shared data is broadcast under the farthest-first issue order
//! and its waiting hops are charged.
//!
//! All returned times are seconds, energies joules.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::redistribute;
use crate::topology::{HopStrategy, Topology};
use crate::workload::{GemmOp, TaskSequence};

/// Hardware and energy parameters.
///
/// Bandwidths are bytes/s; per-bit energies joules/bit; `e_mac` is joules
/// per active array cycle per MAC unit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostParams {
    pub bw_nop: f64,
    pub bw_mem: f64,
    /// Systolic array rows per chiplet.
    pub r: u64,
    /// Systolic array columns per chiplet.
    pub c: u64,
    /// Clock frequency used to turn array cycles into seconds.
    pub freq_hz: f64,
    pub e_sram: f64,
    pub e_mac: f64,
    /// Energy per bit per link hop.
    pub e_nop: f64,
    /// Energy per bit crossing the off-package interface.
    pub e_offchip: f64,
}

impl CostParams {
    /// DRAM-backed package: 60 GB/s memory, 60 GB/s links.
    pub fn dram_defaults() -> Self {
        CostParams {
            bw_nop: 60e9,
            bw_mem: 60e9,
            r: 16,
            c: 16,
            freq_hz: 1e9,
            e_sram: 0.28e-12,
            e_mac: 4.6e-12,
            e_nop: 1.285e-12,
            e_offchip: 14.8e-12,
        }
    }

    /// HBM-backed package: 1000 GB/s memory, 60 GB/s links.
    pub fn hbm_defaults() -> Self {
        CostParams { bw_mem: 1000e9, e_offchip: 4.11e-12, ..Self::dram_defaults() }
    }

    /// Which distribution regime the bandwidth pair puts the package in.
    /// Memory at or below link speed is the memory-bound case.
    pub fn regime(&self) -> BwRegime {
        if self.bw_mem <= self.bw_nop {
            BwRegime::LowBw
        } else {
            BwRegime::HighBw
        }
    }
}

/// Distribution regime; see [`CostParams::regime`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BwRegime {
    LowBw,
    HighBw,
}

/// Output partition of one operator over the grid: `px` splits the M rows
/// across grid rows, `py` splits the N columns across grid columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub px: Vec<u64>,
    pub py: Vec<u64>,
}

impl Partition {
    pub fn new(px: Vec<u64>, py: Vec<u64>) -> Self {
        Partition { px, py }
    }

    /// Checks the partition against an operator's shape and the array size:
    /// entries sum to the dimension, and every nonzero entry covers at least
    /// one full array fold unless the whole dimension is smaller than the
    /// array.
    pub fn validate(&self, op: &GemmOp, x: usize, y: usize, r: u64, c: u64) -> Result<()> {
        if self.px.len() != x || self.py.len() != y {
            return Err(Error::InvalidPartition(format!(
                "op '{}': partition is {}x{} but grid is {}x{}",
                op.name,
                self.px.len(),
                self.py.len(),
                x,
                y
            )));
        }
        let sum_px: u64 = self.px.iter().sum();
        let sum_py: u64 = self.py.iter().sum();
        if sum_px != op.m || sum_py != op.n {
            return Err(Error::InvalidPartition(format!(
                "op '{}': partition sums ({}, {}) do not match dims ({}, {})",
                op.name, sum_px, sum_py, op.m, op.n
            )));
        }
        if op.m >= r {
            if let Some(bad) = self.px.iter().find(|&&v| v > 0 && v < r) {
                return Err(Error::InvalidPartition(format!(
                    "op '{}': row share {} is below the array height {}",
                    op.name, bad, r
                )));
            }
        }
        if op.n >= c {
            if let Some(bad) = self.py.iter().find(|&&v| v > 0 && v < c) {
                return Err(Error::InvalidPartition(format!(
                    "op '{}': column share {} is below the array width {}",
                    op.name, bad, c
                )));
            }
        }
        Ok(())
    }
}

/// Model composition switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelOptions {
    /// Replace the store/load pair between a chained pair of operators by
    /// on-package redistribution whenever that is cheaper.
    pub redistribute: bool,
    /// Overlap each operator's input loading with its predecessor's compute
    /// at boundaries that do not synchronize.
    pub async_fuse: bool,
}

/// Per-operator cost record. Latency components are disjoint phases; their
/// sum across all records equals the total latency when no overlap is
/// requested.
#[derive(Debug, Clone, Serialize)]
pub struct OpCost {
    pub name: String,
    pub compute_s: f64,
    pub collect_s: f64,
    pub offchip_load_s: f64,
    pub offchip_store_s: f64,
    pub distribute_s: f64,
    pub redistribute_s: f64,
    pub e_compute_j: f64,
    pub e_onchip_j: f64,
    pub e_offchip_j: f64,
}

impl OpCost {
    fn latency(&self) -> f64 {
        self.compute_s
            + self.collect_s
            + self.offchip_load_s
            + self.offchip_store_s
            + self.distribute_s
            + self.redistribute_s
    }

    fn energy(&self) -> f64 {
        self.e_compute_j + self.e_onchip_j + self.e_offchip_j
    }
}

/// Full cost of a partitioned sequence.
#[derive(Debug, Clone, Serialize)]
pub struct CostBreakdown {
    pub per_op: Vec<OpCost>,
    pub latency_s: f64,
    pub energy_j: f64,
    /// Always exactly `latency_s * energy_j`.
    pub edp_js: f64,
}

/// Cycles for one chiplet to produce a `px_rows * py_cols` output block with
/// contraction depth `k` on an `r * c` output-stationary array: one array
/// pass costs `2r + c + k - 2` cycles and the block needs
/// `ceil(px/r) * ceil(py/c)` passes. Chiplets with an empty block are idle.
pub fn compute_latency_chiplet(px_rows: u64, py_cols: u64, k: u64, r: u64, c: u64) -> u64 {
    if px_rows == 0 || py_cols == 0 {
        return 0;
    }
    let pass = 2 * r + c + k - 2;
    pass * px_rows.div_ceil(r) * py_cols.div_ceil(c)
}

/// Seconds until the slowest chiplet finishes the operator.
pub fn combine_compute(op: &GemmOp, part: &Partition, params: &CostParams) -> f64 {
    let mut worst = 0u64;
    for &px in &part.px {
        for &py in &part.py {
            worst = worst.max(compute_latency_chiplet(px, py, op.k, params.r, params.c));
        }
    }
    worst as f64 / params.freq_hz
}

/// Seconds to drain the operator's output through the entry links. A grid
/// whose only chiplet is the global one has nothing to move.
pub fn collect_latency(op: &GemmOp, topo: &Topology, params: &CostParams) -> f64 {
    if topo.entry_links() == 0 {
        return 0.0;
    }
    op.out_bytes() as f64 / (topo.entry_links() as f64 * params.bw_nop)
}

/// Seconds to move `bytes` across the off-package interface.
pub fn offchip_latency(bytes: u64, params: &CostParams) -> f64 {
    bytes as f64 / params.bw_mem
}

/// Worst per-chiplet delivery time for one operand whose per-chiplet chunk
/// sizes and hop strategy are given by `chunk_of` and `strategy`.
fn operand_distribute(
    topo: &Topology,
    part: &Partition,
    strategy: HopStrategy,
    params: &CostParams,
    chunk_of: impl Fn(usize, usize) -> u64,
) -> f64 {
    let mut worst = 0.0f64;
    for (x, &px) in part.px.iter().enumerate() {
        if px == 0 {
            continue;
        }
        for (y, &py) in part.py.iter().enumerate() {
            if py == 0 {
                continue;
            }
            let chunk = chunk_of(x, y);
            let hops = topo.hops((x, y), strategy).expect("partition matches grid") as f64;
            worst = worst.max(chunk as f64 / params.bw_nop * hops);
        }
    }
    worst
}

/// Seconds to deliver the operator's inputs to the active chiplets.
///
/// `A` slices are shared along grid rows and `B` slices along grid columns.
/// In the memory-bound regime both operands trickle together along shortest
/// paths; in the link-bound regime each operand is broadcast in turn under
/// the farthest-first order, with the row broadcast free to use diagonal
/// links when they are cheaper.
pub fn distribute_latency(
    op: &GemmOp,
    part: &Partition,
    topo: &Topology,
    params: &CostParams,
    regime: BwRegime,
) -> f64 {
    if topo.entry_links() == 0 {
        // Single-chiplet grid: inputs land on the die straight from memory.
        return 0.0;
    }
    let bpe = u64::from(op.bytes_per_element);
    let a_chunk = |x: usize| part.px[x] * op.k * bpe;
    let b_chunk = |y: usize| op.k * part.py[y] * bpe;
    match regime {
        BwRegime::LowBw => operand_distribute(topo, part, HopStrategy::LowBw, params, |x, y| {
            a_chunk(x) + b_chunk(y)
        }),
        BwRegime::HighBw => {
            let a = operand_distribute(topo, part, HopStrategy::RowShared, params, |x, _| {
                a_chunk(x)
            });
            let b = operand_distribute(topo, part, HopStrategy::ColShared, params, |_, y| {
                b_chunk(y)
            });
            a + b
        }
    }
}

/// Energy of compute: SRAM traffic for all three matrices plus MAC array
/// activity summed over the chiplets that hold work.
pub fn compute_energy(op: &GemmOp, part: &Partition, params: &CostParams) -> f64 {
    let sram_bits = 8.0 * (op.a_bytes() + op.b_bytes() + op.out_bytes()) as f64;
    let mut mac = 0.0;
    for &px in &part.px {
        for &py in &part.py {
            let cycles = compute_latency_chiplet(px, py, op.k, params.r, params.c);
            mac += params.e_mac * cycles as f64 * (params.r * params.c) as f64;
        }
    }
    params.e_sram * sram_bits + mac
}

/// Energy of moving `bytes` across `hops` package links.
pub fn onchip_energy(bytes: u64, hops: u64, params: &CostParams) -> f64 {
    params.e_nop * 8.0 * bytes as f64 * hops as f64
}

/// Energy of moving `bytes` across the off-package interface.
pub fn offchip_energy(bytes: u64, params: &CostParams) -> f64 {
    params.e_offchip * 8.0 * bytes as f64
}

/// Energy of delivering both operands to the active chiplets. Each per-row
/// `A` chunk (per-column `B` chunk) rides one multicast tree per serving
/// global: transit to the row or column plus the directional spans of the
/// consumers assigned to that global. Waiting slots cost time, not energy.
fn distribute_energy(op: &GemmOp, part: &Partition, topo: &Topology, params: &CostParams) -> f64 {
    use std::collections::BTreeMap;
    let bpe = u64::from(op.bytes_per_element);
    // (global, grid row) -> (vertical transit, left span, right span)
    let mut row_groups: BTreeMap<((usize, usize), usize), (u64, u64, u64)> = BTreeMap::new();
    // (global, grid col) -> (horizontal transit, up span, down span)
    let mut col_groups: BTreeMap<((usize, usize), usize), (u64, u64, u64)> = BTreeMap::new();
    for (x, &px) in part.px.iter().enumerate() {
        if px == 0 {
            continue;
        }
        for (y, &py) in part.py.iter().enumerate() {
            if py == 0 {
                continue;
            }
            let g = topo.global_of((x, y)).expect("partition matches grid");
            let row = row_groups.entry((g, x)).or_insert((x.abs_diff(g.0) as u64, 0, 0));
            if y < g.1 {
                row.1 = row.1.max((g.1 - y) as u64);
            } else {
                row.2 = row.2.max((y - g.1) as u64);
            }
            let col = col_groups.entry((g, y)).or_insert((y.abs_diff(g.1) as u64, 0, 0));
            if x < g.0 {
                col.1 = col.1.max((g.0 - x) as u64);
            } else {
                col.2 = col.2.max((x - g.0) as u64);
            }
        }
    }
    let mut energy = 0.0;
    for (&((_, _), x), &(t, l, r)) in &row_groups {
        energy += onchip_energy(part.px[x] * op.k * bpe, t + l + r, params);
    }
    for (&((_, _), y), &(t, u, d)) in &col_groups {
        energy += onchip_energy(op.k * part.py[y] * bpe, t + u + d, params);
    }
    energy
}

fn collect_energy(op: &GemmOp, part: &Partition, topo: &Topology, params: &CostParams) -> f64 {
    let bpe = u64::from(op.bytes_per_element);
    let mut energy = 0.0;
    for (x, &px) in part.px.iter().enumerate() {
        if px == 0 {
            continue;
        }
        for (y, &py) in part.py.iter().enumerate() {
            if py == 0 {
                continue;
            }
            let hops = topo.hops((x, y), HopStrategy::LowBw).expect("partition matches grid");
            energy += onchip_energy(px * py * bpe, hops, params);
        }
    }
    energy
}

/// Evaluates the full sequence under `options`.
///
/// Per operator the phases are: off-chip load of both operands, on-package
/// distribution, compute, on-package collection, off-chip store. When
/// `options.redistribute` is set and a pair is chained, the producer's
/// store phases and the consumer's load phases are replaced by on-package
/// redistribution whenever that is cheaper. When `options.async_fuse` is
/// set, each operator's load overlaps the previous operator's compute
/// unless the boundary synchronizes.
pub fn end_to_end(
    task: &TaskSequence,
    parts: &[Partition],
    topo: &Topology,
    params: &CostParams,
    options: &ModelOptions,
) -> Result<CostBreakdown> {
    end_to_end_with_gathers(task, parts, topo, params, options, None)
}

/// [`end_to_end`] with the gather column of each chained pair pinned.
///
/// `gathers` holds one entry per chained pair, in pair order; each entry
/// pins the gather column of every grid row for that boundary. `None` lets
/// every row pick its own best column.
pub fn end_to_end_with_gathers(
    task: &TaskSequence,
    parts: &[Partition],
    topo: &Topology,
    params: &CostParams,
    options: &ModelOptions,
    gathers: Option<&[Vec<usize>]>,
) -> Result<CostBreakdown> {
    if parts.len() != task.ops.len() {
        return Err(Error::InvalidPartition(format!(
            "{} partitions for {} ops",
            parts.len(),
            task.ops.len()
        )));
    }
    let x = topo.spec().x;
    let y = topo.spec().y;
    for (op, part) in task.ops.iter().zip(parts) {
        part.validate(op, x, y, params.r, params.c)?;
    }
    let regime = params.regime();

    let mut per_op: Vec<OpCost> = Vec::with_capacity(task.ops.len());
    for (i, op) in task.ops.iter().enumerate() {
        let part = &parts[i];
        let load_bytes = op.a_bytes() + op.b_bytes();
        let cost = OpCost {
            name: op.name.clone(),
            compute_s: combine_compute(op, part, params),
            collect_s: collect_latency(op, topo, params),
            offchip_load_s: offchip_latency(load_bytes, params),
            offchip_store_s: offchip_latency(op.out_bytes(), params),
            distribute_s: distribute_latency(op, part, topo, params, regime),
            redistribute_s: 0.0,
            e_compute_j: compute_energy(op, part, params),
            e_onchip_j: collect_energy(op, part, topo, params)
                + distribute_energy(op, part, topo, params),
            e_offchip_j: offchip_energy(load_bytes, params)
                + offchip_energy(op.out_bytes(), params),
        };
        per_op.push(cost);
    }

    if options.redistribute {
        for (pair_idx, pair) in task.chained_pairs().into_iter().enumerate() {
            let (i, j) = (pair, pair + 1);
            let pinned = gathers.and_then(|g| g.get(pair_idx)).map(Vec::as_slice);
            let plan = redistribute::redistribution_cost(
                &task.ops[i],
                &task.ops[j],
                &parts[i],
                &parts[j],
                topo,
                params,
                pinned,
            )?;
            let roundtrip = per_op[i].collect_s
                + per_op[i].offchip_store_s
                + per_op[j].offchip_load_s
                + per_op[j].distribute_s;
            if plan.total_latency_s <= roundtrip {
                // Store/load around this boundary moves on-package instead;
                // each record sheds exactly the phases it owned.
                let store_energy = offchip_energy(task.ops[i].out_bytes(), params);
                let load_energy =
                    offchip_energy(task.ops[j].a_bytes() + task.ops[j].b_bytes(), params);
                let producer_collect = collect_energy(&task.ops[i], &parts[i], topo, params);
                let consumer_spread = distribute_energy(&task.ops[j], &parts[j], topo, params);
                per_op[i].collect_s = 0.0;
                per_op[i].offchip_store_s = 0.0;
                per_op[j].offchip_load_s = 0.0;
                per_op[j].distribute_s = 0.0;
                per_op[i].redistribute_s = plan.total_latency_s;
                per_op[i].e_onchip_j -= producer_collect.min(per_op[i].e_onchip_j);
                per_op[i].e_onchip_j += plan.energy_j;
                per_op[j].e_onchip_j -= consumer_spread.min(per_op[j].e_onchip_j);
                per_op[i].e_offchip_j -= store_energy.min(per_op[i].e_offchip_j);
                per_op[j].e_offchip_j -= load_energy.min(per_op[j].e_offchip_j);
            }
        }
    }

    let latency_s = if options.async_fuse && !per_op.is_empty() {
        let n = per_op.len();
        let load = |i: usize| per_op[i].offchip_load_s + per_op[i].distribute_s;
        let mut total = load(0);
        for i in 0..n {
            let next_load = if i + 1 < n { load(i + 1) } else { 0.0 };
            if i + 1 < n && !task.ops[i].sync {
                total += per_op[i].compute_s.max(next_load);
            } else {
                total += per_op[i].compute_s + next_load;
            }
            total += per_op[i].collect_s + per_op[i].offchip_store_s + per_op[i].redistribute_s;
        }
        total
    } else {
        per_op.iter().map(OpCost::latency).sum()
    };
    let energy_j: f64 = per_op.iter().map(OpCost::energy).sum();
    Ok(CostBreakdown { per_op, latency_s, energy_j, edp_js: latency_s * energy_j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{GridSpec, GridType};
    use approx::assert_relative_eq;

    fn topo(x: usize, y: usize, t: GridType, diag: bool) -> Topology {
        Topology::build(GridSpec::new(x, y, t, diag)).unwrap()
    }

    #[test]
    fn array_pass_cycle_counts() {
        // One 16x16 block with depth 16 on a 16x16 array.
        assert_eq!(compute_latency_chiplet(16, 16, 16, 16, 16), 62);
        // Doubling the rows doubles the folds.
        assert_eq!(compute_latency_chiplet(32, 16, 16, 16, 16), 124);
        // Partial folds round up.
        assert_eq!(compute_latency_chiplet(17, 16, 16, 16, 16), 124);
        // Idle chiplets burn nothing.
        assert_eq!(compute_latency_chiplet(0, 16, 16, 16, 16), 0);
    }

    #[test]
    fn collect_drains_through_entry_links() {
        let t = topo(4, 4, GridType::A, false);
        let op = GemmOp::new("g", 64, 16, 64);
        let params = CostParams::dram_defaults();
        // 4096 bytes over 2 entry links at 60 GB/s.
        assert_relative_eq!(
            collect_latency(&op, &t, &params),
            4096.0 / 120e9,
            max_relative = 1e-12
        );
    }

    #[test]
    fn offchip_times() {
        let params = CostParams::dram_defaults();
        assert_relative_eq!(
            offchip_latency(16_000_000_000, &params),
            16.0 / 60.0,
            max_relative = 1e-12
        );
        let params = CostParams::hbm_defaults();
        assert_relative_eq!(offchip_latency(16_000_000_000, &params), 0.016, max_relative = 1e-12);
    }

    #[test]
    fn distribute_worst_chiplet_drives_row_broadcast() {
        // Only grid row 3 has rows and only columns 0..=2 have columns, so
        // the row-shared broadcast bottoms out at chiplet (3, 2): a 1 KB
        // chunk over 7 hop-quanta.
        let t = topo(5, 5, GridType::A, false);
        let op = GemmOp::new("g", 16, 64, 48);
        let part = Partition::new(vec![0, 0, 0, 16, 0], vec![16, 16, 16, 0, 0]);
        let params = CostParams::dram_defaults();
        let a = operand_distribute(&t, &part, HopStrategy::RowShared, &params, |x, _| {
            part.px[x] * op.k
        });
        assert_relative_eq!(a, 1024.0 * 7.0 / 60e9, max_relative = 1e-12);

        // Diagonal links shorten the same delivery to 5 quanta.
        let t = topo(5, 5, GridType::A, true);
        let a = operand_distribute(&t, &part, HopStrategy::RowShared, &params, |x, _| {
            part.px[x] * op.k
        });
        assert_relative_eq!(a, 1024.0 * 5.0 / 60e9, max_relative = 1e-12);
    }

    #[test]
    fn distribute_on_single_chiplet_grid_is_free() {
        let t = topo(1, 1, GridType::A, false);
        let op = GemmOp::new("g", 16, 16, 16);
        let part = Partition::new(vec![16], vec![16]);
        let params = CostParams::dram_defaults();
        assert_eq!(distribute_latency(&op, &part, &t, &params, BwRegime::LowBw), 0.0);
        assert_eq!(distribute_latency(&op, &part, &t, &params, BwRegime::HighBw), 0.0);
        assert_eq!(collect_latency(&op, &t, &params), 0.0);
    }

    #[test]
    fn distribute_combines_both_operands_in_link_bound_regime() {
        let t = topo(5, 5, GridType::A, false);
        let op = GemmOp::new("g", 16, 64, 48);
        let part = Partition::new(vec![0, 0, 0, 16, 0], vec![16, 16, 16, 0, 0]);
        let params = CostParams::dram_defaults();
        // A: 1024 B to (3, 2) at 5+2 hops. B: 1024 B per column, worst at
        // column 2 for row 3: 5+3 hops.
        let expect = 1024.0 * 7.0 / 60e9 + 1024.0 * 8.0 / 60e9;
        assert_relative_eq!(
            distribute_latency(&op, &part, &t, &params, BwRegime::HighBw),
            expect,
            max_relative = 1e-12
        );
        // Memory-bound: both chunks ride shortest paths together.
        let expect_low = (1024.0 + 1024.0) * 5.0 / 60e9;
        assert_relative_eq!(
            distribute_latency(&op, &part, &t, &params, BwRegime::LowBw),
            expect_low,
            max_relative = 1e-12
        );
    }

    #[test]
    fn energy_formulas() {
        let params = CostParams::dram_defaults();
        // MAC part of compute energy for one chiplet running 62 cycles.
        let op = GemmOp::new("g", 16, 16, 16);
        let part = Partition::new(vec![16], vec![16]);
        let mut p = params;
        p.e_sram = 0.0;
        assert_relative_eq!(
            compute_energy(&op, &part, &p),
            4.6e-12 * 62.0 * 256.0,
            max_relative = 1e-9
        );
        // 1 KB over 3 hops.
        assert_relative_eq!(
            onchip_energy(1024, 3, &params),
            1.285e-12 * 8192.0 * 3.0,
            max_relative = 1e-12
        );
        // 1 KB across the DRAM interface.
        assert_relative_eq!(
            offchip_energy(1024, &params),
            14.8e-12 * 8192.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn end_to_end_is_dominated_by_offchip_for_huge_elements() {
        // Two ops whose matrices total 1 GB of off-chip traffic each, with
        // sub-microsecond compute: total is two memory round trips.
        let t = topo(1, 1, GridType::A, false);
        let mut op0 = GemmOp::new("a", 2, 1, 1);
        op0.bytes_per_element = 200_000_000;
        let mut op1 = op0.clone();
        op1.name = "b".into();
        let task = TaskSequence::new(vec![op0, op1], vec![false, false]).unwrap();
        let parts = vec![
            Partition::new(vec![2], vec![1]),
            Partition::new(vec![2], vec![1]),
        ];
        let params = CostParams::dram_defaults();
        let bd = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        assert_relative_eq!(bd.latency_s, 2.0 * 1e9 / 60e9, max_relative = 1e-5);
    }

    #[test]
    fn component_sum_matches_total_without_overlap() {
        let t = topo(4, 4, GridType::A, false);
        let task = crate::workload::gemm_chain(3, 64);
        let parts: Vec<Partition> = (0..3)
            .map(|_| Partition::new(vec![16; 4], vec![16; 4]))
            .collect();
        let params = CostParams::hbm_defaults();
        let bd = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        let sum: f64 = bd.per_op.iter().map(OpCost::latency).sum();
        assert_relative_eq!(bd.latency_s, sum, max_relative = 1e-12);
        assert_relative_eq!(bd.edp_js, bd.latency_s * bd.energy_j, max_relative = 0.0);
    }

    #[test]
    fn async_fuse_never_slower() {
        let t = topo(4, 4, GridType::A, false);
        let task = crate::workload::gemm_chain(4, 64);
        let parts: Vec<Partition> = (0..4)
            .map(|_| Partition::new(vec![16; 4], vec![16; 4]))
            .collect();
        let params = CostParams::hbm_defaults();
        let serial = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        let fused = end_to_end(
            &task,
            &parts,
            &t,
            &params,
            &ModelOptions { async_fuse: true, redistribute: false },
        )
        .unwrap();
        assert!(fused.latency_s <= serial.latency_s + 1e-15);
    }

    #[test]
    fn sync_boundary_blocks_overlap() {
        let t = topo(4, 4, GridType::A, false);
        let mut task = crate::workload::gemm_chain(2, 64);
        task.ops[0].sync = true;
        let parts: Vec<Partition> = (0..2)
            .map(|_| Partition::new(vec![16; 4], vec![16; 4]))
            .collect();
        let params = CostParams::hbm_defaults();
        let serial = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        let fused = end_to_end(
            &task,
            &parts,
            &t,
            &params,
            &ModelOptions { async_fuse: true, redistribute: false },
        )
        .unwrap();
        // The only overlappable boundary synchronizes, so nothing overlaps.
        assert_relative_eq!(fused.latency_s, serial.latency_s, max_relative = 1e-12);
    }

    #[test]
    fn memory_bound_regime_barely_notices_link_speed() {
        let t = topo(4, 4, GridType::A, false);
        let task = crate::workload::gemm_chain(2, 256);
        let parts: Vec<Partition> = (0..2)
            .map(|_| Partition::new(vec![64; 4], vec![64; 4]))
            .collect();
        let mut params = CostParams::dram_defaults();
        params.bw_mem = 60e6; // three orders below the links
        let base = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        params.bw_nop *= 2.0;
        let faster_links = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        let change = (base.latency_s - faster_links.latency_s).abs() / base.latency_s;
        assert!(change < 0.01, "change {change}");
    }

    #[test]
    fn link_bound_distribution_halves_with_link_speed() {
        let t = topo(4, 4, GridType::A, false);
        let task = crate::workload::gemm_chain(2, 256);
        let parts: Vec<Partition> = (0..2)
            .map(|_| Partition::new(vec![64; 4], vec![64; 4]))
            .collect();
        let params = CostParams::hbm_defaults();
        let base = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
        let mut fast = params;
        fast.bw_nop *= 2.0;
        let faster = end_to_end(&task, &parts, &t, &fast, &ModelOptions::default()).unwrap();
        for (a, b) in base.per_op.iter().zip(&faster.per_op) {
            assert_relative_eq!(a.distribute_s, 2.0 * b.distribute_s, max_relative = 1e-9);
        }
    }

    #[test]
    fn latency_monotone_in_memory_bandwidth_within_regime() {
        let t = topo(4, 4, GridType::A, false);
        let task = crate::workload::gemm_chain(2, 128);
        let parts: Vec<Partition> = (0..2)
            .map(|_| Partition::new(vec![32; 4], vec![32; 4]))
            .collect();
        let mut prev = f64::INFINITY;
        // All points below the link speed stay in the memory-bound regime.
        for bw in [10e9, 20e9, 40e9, 60e9] {
            let mut params = CostParams::dram_defaults();
            params.bw_mem = bw;
            let bd = end_to_end(&task, &parts, &t, &params, &ModelOptions::default()).unwrap();
            assert!(bd.latency_s <= prev);
            prev = bd.latency_s;
        }
    }

    #[test]
    fn partition_validation_rejects_bad_shapes() {
        let op = GemmOp::new("g", 64, 16, 64);
        // Sum mismatch.
        assert!(Partition::new(vec![32, 16, 16, 16], vec![16; 4])
            .validate(&op, 4, 4, 16, 16)
            .is_err());
        // Sliver below the array height.
        assert!(Partition::new(vec![33, 15, 16, 0], vec![16; 4])
            .validate(&op, 4, 4, 16, 16)
            .is_err());
        // Valid.
        assert!(Partition::new(vec![16; 4], vec![16; 4])
            .validate(&op, 4, 4, 16, 16)
            .is_ok());
        // A dimension smaller than the array may sit on one row.
        let tiny = GemmOp::new("t", 8, 16, 16);
        assert!(Partition::new(vec![8, 0, 0, 0], vec![16, 0, 0, 0])
            .validate(&tiny, 4, 4, 16, 16)
            .is_ok());
    }
}
