//! On-package layout change between a producer's output partition and the
//! next operator's input partition, avoiding the memory round trip.
//!
//! The producer leaves its output scattered: chiplet `(x, y)` holds a
//! `px[x] * py[y]` block. The consumer wants its `A` operand laid out by its
//! own row split, with the full contraction width on every active chiplet.
//! Redistribution runs in three pipelined stages over the existing links:
//!
//! 1. **Row gather** — every grid row funnels its blocks into one gather
//!    column; the two sides stream in concurrently, so a row finishes when
//!    its heavier side has drained.
//! 2. **Row broadcast** — the assembled row block is relayed outward from
//!    the gather column to the whole row; the farthest column bounds the
//!    time.
//! 3. **Column shift** — full-width row slices move vertically to the grid
//!    rows the consumer's split assigns them to; columns work in parallel
//!    and each carries the same slices.
//!
//! Stage times use the package link bandwidth; stages serialize.

use serde::Serialize;

use crate::costmodel::{CostParams, Partition};
use crate::error::{Error, Result};
use crate::topology::Topology;
use crate::workload::GemmOp;

/// Cost and choices of one redistribution between chained operators.
#[derive(Debug, Clone, Serialize)]
pub struct RedistributionPlan {
    /// Chosen gather column per grid row (meaningful where the row is active).
    pub gather_cols: Vec<usize>,
    pub gather_s: f64,
    pub broadcast_s: f64,
    pub column_shift_s: f64,
    pub total_latency_s: f64,
    pub energy_j: f64,
}

/// Gather column minimizing the heavier side's drain, given per-column byte
/// loads; ties go to the lowest column.
pub fn optimal_gather(loads: &[u64]) -> usize {
    let mut best = (u64::MAX, 0usize);
    for g in 0..loads.len() {
        let left: u64 = loads[..g].iter().sum();
        let right: u64 = loads[g + 1..].iter().sum();
        let worst = left.max(right);
        if worst < best.0 {
            best = (worst, g);
        }
    }
    best.1
}

/// Half-open output-row ranges `[start, end)` covered by each grid row.
fn row_ranges(px: &[u64]) -> Vec<(u64, u64)> {
    let mut ranges = Vec::with_capacity(px.len());
    let mut start = 0u64;
    for &p in px {
        ranges.push((start, start + p));
        start += p;
    }
    ranges
}

fn overlap(a: (u64, u64), b: (u64, u64)) -> u64 {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Costs the layout change from `producer_part` (the finished output) to
/// `consumer_part`'s row split of the same tensor. The pair must be chained:
/// the producer's output width is the consumer's contraction depth. Pass
/// `gather` to pin the gather column of every grid row; otherwise each row
/// picks its own best.
pub fn redistribution_cost(
    producer: &GemmOp,
    consumer: &GemmOp,
    producer_part: &Partition,
    consumer_part: &Partition,
    topo: &Topology,
    params: &CostParams,
    gather: Option<&[usize]>,
) -> Result<RedistributionPlan> {
    if producer.n != consumer.k {
        return Err(Error::NotChained(format!(
            "'{}' produces width {} but '{}' contracts over {}",
            producer.name, producer.n, consumer.name, consumer.k
        )));
    }
    let x = topo.spec().x;
    let y = topo.spec().y;
    if producer_part.px.len() != x || producer_part.py.len() != y {
        return Err(Error::InvalidPartition(format!(
            "producer partition is {}x{} but grid is {}x{}",
            producer_part.px.len(),
            producer_part.py.len(),
            x,
            y
        )));
    }
    if consumer_part.px.len() != x {
        return Err(Error::InvalidPartition(format!(
            "consumer partition has {} row shares but grid has {} rows",
            consumer_part.px.len(),
            x
        )));
    }
    if let Some(g) = gather {
        if g.len() != x {
            return Err(Error::InvalidPartition(format!(
                "{} gather columns for {} grid rows",
                g.len(),
                x
            )));
        }
        if let Some(bad) = g.iter().find(|&&c| c >= y) {
            return Err(Error::InvalidPartition(format!(
                "gather column {bad} outside grid width {y}"
            )));
        }
    }

    let bpe = u64::from(producer.bytes_per_element);
    let bw = params.bw_nop;
    let mut gather_cols = vec![0usize; x];
    let mut gather_s = 0.0f64;
    let mut broadcast_s = 0.0f64;
    let mut gather_bit_hops = 0u64;
    let mut broadcast_bit_hops = 0u64;
    let row_block = |r: usize| producer_part.px[r] * producer.n * bpe;
    for r in 0..x {
        if producer_part.px[r] == 0 {
            continue;
        }
        let loads: Vec<u64> =
            producer_part.py.iter().map(|&p| producer_part.px[r] * p * bpe).collect();
        let g = match gather {
            Some(cols) => cols[r],
            None => optimal_gather(&loads),
        };
        gather_cols[r] = g;
        let left: u64 = loads[..g].iter().sum();
        let right: u64 = loads[g + 1..].iter().sum();
        gather_s = gather_s.max(left.max(right) as f64 / bw);
        for (c, &load) in loads.iter().enumerate() {
            gather_bit_hops += load * c.abs_diff(g) as u64;
        }
        if y > 1 {
            let reach = g.max(y - 1 - g) as u64;
            broadcast_s = broadcast_s.max(row_block(r) as f64 / bw * reach as f64);
            broadcast_bit_hops += row_block(r) * (y as u64 - 1);
        }
    }

    // Stage 3: every column holds every row block in full width, so the
    // per-column work is identical and columns run in parallel.
    let src = row_ranges(&producer_part.px);
    let dst = row_ranges(&consumer_part.px);
    let mut shift_bytes_hops = 0u64;
    for (i, &s) in src.iter().enumerate() {
        for (j, &d) in dst.iter().enumerate() {
            if i == j {
                continue;
            }
            let rows = overlap(s, d);
            if rows > 0 {
                shift_bytes_hops += rows * producer.n * bpe * i.abs_diff(j) as u64;
            }
        }
    }
    let column_shift_s = shift_bytes_hops as f64 / bw;
    let shift_bit_hops = shift_bytes_hops * y as u64;

    let total_latency_s = gather_s + broadcast_s + column_shift_s;
    let energy_j =
        params.e_nop * 8.0 * (gather_bit_hops + broadcast_bit_hops + shift_bit_hops) as f64;
    Ok(RedistributionPlan {
        gather_cols,
        gather_s,
        broadcast_s,
        column_shift_s,
        total_latency_s,
        energy_j,
    })
}
