//! Discrete-event store-and-forward simulator of the package mesh.
//!
//! Messages move whole: a link carries one message at a time and serves its
//! queue in flow-issue order, so booking links flow by flow in issue order
//! reproduces the event-driven schedule exactly. Chiplet-to-chiplet links
//! run at the package bandwidth; the links attaching the memory node to the
//! global chiplets run at the memory bandwidth. The simulator doubles as
//! the oracle for the closed-form hop counts: [`validate_hops`] replays
//! each delivery discipline and compares arrival times against
//! [`Topology::hops`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::topology::{Coord, GridSpec, GridType, HopStrategy, Topology};

/// A network endpoint: the external memory or a chiplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Node {
    Memory,
    Chip(Coord),
}

/// Directed link between adjacent nodes.
pub type Link = (Node, Node);

/// One message with its full route pinned at construction.
#[derive(Debug, Clone)]
pub struct Flow {
    pub source: Node,
    pub dest: Coord,
    pub bytes: u64,
    pub route: Vec<Link>,
}

impl Flow {
    pub fn new(source: Node, dest: Coord, bytes: u64, route: Vec<Link>) -> Self {
        Flow { source, dest, bytes, route }
    }
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    /// Time of the last delivery.
    pub completion_s: f64,
    /// Delivery time of each flow, in input order.
    pub deliveries_s: Vec<f64>,
    /// Accumulated transfer time per link.
    pub busy_s: BTreeMap<Link, f64>,
    /// `busy / completion` per link.
    pub utilization: BTreeMap<Link, f64>,
}

fn check_route(topo: &Topology, flow: &Flow) -> Result<()> {
    if flow.bytes == 0 {
        return Err(Error::InvalidWorkload("flow carries zero bytes".into()));
    }
    let mut at = flow.source;
    for &(a, b) in &flow.route {
        if a != at {
            return Err(Error::InvalidRoute(format!(
                "link {a:?}->{b:?} does not continue from {at:?}"
            )));
        }
        match (a, b) {
            (Node::Memory, Node::Chip(g)) => {
                if !topo.is_global(g) {
                    return Err(Error::InvalidRoute(format!(
                        "memory attaches only to global chiplets, not {g:?}"
                    )));
                }
            }
            (Node::Chip(u), Node::Chip(v)) => {
                if !topo.all_neighbors(u).contains(&v) {
                    return Err(Error::InvalidRoute(format!("no link {u:?}->{v:?}")));
                }
            }
            (_, Node::Memory) => {
                return Err(Error::InvalidRoute("flows do not enter the memory node".into()))
            }
        }
        at = b;
    }
    if at != Node::Chip(flow.dest) {
        return Err(Error::InvalidRoute(format!(
            "route ends at {at:?}, not the destination {:?}",
            flow.dest
        )));
    }
    Ok(())
}

/// Runs the flows in issue order. Each link transfers one message at a time
/// (memory-attach links at `bw_mem`, package links at `bw_nop`) and serves
/// requests FIFO in flow-issue order; completion is the last delivery.
pub fn simulate(topo: &Topology, flows: &[Flow], bw_nop: f64, bw_mem: f64) -> Result<SimResult> {
    for flow in flows {
        check_route(topo, flow)?;
    }
    let mut free: BTreeMap<Link, f64> = BTreeMap::new();
    let mut busy: BTreeMap<Link, f64> = BTreeMap::new();
    let mut deliveries = Vec::with_capacity(flows.len());
    for flow in flows {
        let mut t = 0.0f64;
        for &link in &flow.route {
            let bw = if matches!(link.0, Node::Memory) { bw_mem } else { bw_nop };
            let dt = flow.bytes as f64 / bw;
            let start = t.max(*free.get(&link).unwrap_or(&0.0));
            t = start + dt;
            free.insert(link, t);
            *busy.entry(link).or_insert(0.0) += dt;
        }
        deliveries.push(t);
    }
    let completion = deliveries.iter().cloned().fold(0.0f64, f64::max);
    let utilization = busy
        .iter()
        .map(|(&l, &b)| (l, if completion > 0.0 { b / completion } else { 0.0 }))
        .collect();
    Ok(SimResult { completion_s: completion, deliveries_s: deliveries, busy_s: busy, utilization })
}

/// One heatmap entry: utilization of the link leaving `(row, col)` in
/// `direction` (`n/e/s/w`, diagonal `ne/nw/se/sw`, or `mem` for a memory
/// attach, reported at the receiving global chiplet).
#[derive(Debug, Clone, Serialize)]
pub struct HeatmapCell {
    pub row: usize,
    pub col: usize,
    pub direction: String,
    pub utilization: f64,
}

fn direction(a: Coord, b: Coord) -> &'static str {
    let dr = b.0 as i64 - a.0 as i64;
    let dc = b.1 as i64 - a.1 as i64;
    match (dr, dc) {
        (0, 1) => "e",
        (0, -1) => "w",
        (1, 0) => "s",
        (-1, 0) => "n",
        (1, 1) => "se",
        (1, -1) => "sw",
        (-1, 1) => "ne",
        (-1, -1) => "nw",
        _ => "?",
    }
}

/// Per-link utilization over every link of the topology, idle links
/// included, sorted by (row, col, direction).
pub fn heatmap(topo: &Topology, result: &SimResult) -> Vec<HeatmapCell> {
    let mut cells = Vec::new();
    let util = |l: &Link| result.utilization.get(l).copied().unwrap_or(0.0);
    for c in topo.chiplets() {
        for n in topo.all_neighbors(c) {
            let link = (Node::Chip(c), Node::Chip(n));
            cells.push(HeatmapCell {
                row: c.0,
                col: c.1,
                direction: direction(c, n).to_string(),
                utilization: util(&link),
            });
        }
    }
    for &g in topo.globals() {
        let link = (Node::Memory, Node::Chip(g));
        cells.push(HeatmapCell {
            row: g.0,
            col: g.1,
            direction: "mem".to_string(),
            utilization: util(&link),
        });
    }
    cells.sort_by(|a, b| {
        (a.row, a.col, a.direction.as_str()).cmp(&(b.row, b.col, b.direction.as_str()))
    });
    cells
}

// ---------------------------------------------------------------------------
// Motivation scenarios: every chiplet pulls one message from memory.
// ---------------------------------------------------------------------------

/// Message size of the motivation traffic: 1 GB per chiplet.
pub const MOTIVATION_BYTES: u64 = 1_000_000_000;

/// The three memory-congestion scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// 4x4 grid, corner-attached DRAM at 60 GB/s.
    Dram,
    /// 4x4 grid, corner-attached HBM at 1024 GB/s.
    HbmPeriph,
    /// 4x4 grid, center-stacked HBM at 1024 GB/s.
    HbmCentral,
}

impl Scenario {
    pub fn grid(&self) -> GridSpec {
        match self {
            Scenario::Dram | Scenario::HbmPeriph => GridSpec::new(4, 4, GridType::A, false),
            Scenario::HbmCentral => GridSpec::new(4, 4, GridType::C, false),
        }
    }

    pub fn bw_mem(&self) -> f64 {
        match self {
            Scenario::Dram => 60e9,
            Scenario::HbmPeriph | Scenario::HbmCentral => 1024e9,
        }
    }
}

/// Builds the all-chiplets pull: one `bytes` message per chiplet, issued
/// farthest first (nearest last, so the attach chiplet's own pull closes
/// the run), routed with dimension-ordered XY routing from the serving
/// global — vertical to the destination row, then horizontal.
pub fn motivation_flows(topo: &Topology, bytes: u64) -> Result<Vec<Flow>> {
    let mut keyed: Vec<(usize, Coord)> = Vec::new();
    for c in topo.chiplets() {
        let (lx, ly) = topo.local_index(c)?;
        keyed.push((lx + ly, c));
    }
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut flows = Vec::with_capacity(keyed.len());
    for (_, dst) in keyed {
        let g = topo.global_of(dst)?;
        let mut route = vec![(Node::Memory, Node::Chip(g))];
        route.extend(mesh_path(g, dst));
        flows.push(Flow::new(Node::Memory, dst, bytes, route));
    }
    Ok(flows)
}

/// Completion time of a scenario at the given package bandwidth.
pub fn run_scenario(scenario: Scenario, bw_nop: f64) -> Result<(Topology, SimResult)> {
    let topo = Topology::build(scenario.grid())?;
    let flows = motivation_flows(&topo, MOTIVATION_BYTES)?;
    let result = simulate(&topo, &flows, bw_nop, scenario.bw_mem())?;
    Ok((topo, result))
}

// ---------------------------------------------------------------------------
// Hop-count validation against the closed forms.
// ---------------------------------------------------------------------------

/// One disagreement between the simulated delivery and the closed form.
#[derive(Debug, Clone, Serialize)]
pub struct HopMismatch {
    pub chiplet: Coord,
    pub expected_hops: u64,
    pub measured_quanta: f64,
}

/// Result of replaying one strategy's deliveries on a topology.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub mismatches: Vec<HopMismatch>,
}

const VALIDATE_CHUNK: u64 = 1024;
const VALIDATE_BW: f64 = 60e9;

fn mesh_path(from: Coord, to: Coord) -> Vec<Link> {
    let mut route = Vec::new();
    let mut at = from;
    while at.0 != to.0 {
        let next = if at.0 < to.0 { (at.0 + 1, at.1) } else { (at.0 - 1, at.1) };
        route.push((Node::Chip(at), Node::Chip(next)));
        at = next;
    }
    while at.1 != to.1 {
        let next = if at.1 < to.1 { (at.0, at.1 + 1) } else { (at.0, at.1 - 1) };
        route.push((Node::Chip(at), Node::Chip(next)));
        at = next;
    }
    route
}

/// Diagonal staircase from `from` toward `to` using existing diagonal
/// links, finishing with straight steps.
fn diagonal_path(topo: &Topology, from: Coord, to: Coord) -> Vec<Link> {
    let mut route = Vec::new();
    let mut at = from;
    loop {
        let dr = to.0 as i64 - at.0 as i64;
        let dc = to.1 as i64 - at.1 as i64;
        if dr == 0 || dc == 0 {
            break;
        }
        let step = ((at.0 as i64 + dr.signum()) as usize, (at.1 as i64 + dc.signum()) as usize);
        if topo.has_diagonal(at, step) {
            route.push((Node::Chip(at), Node::Chip(step)));
            at = step;
        } else {
            break;
        }
    }
    route.extend(mesh_path(at, to));
    route
}

/// Streamed delivery of one chunk per grid line through the measured
/// chiplet's attach point. The chunks bound past the measured chiplet
/// pipeline immediately ahead of it on its approach; the rest of the
/// stream drains through the shared memory port first. The measured chunk
/// therefore leaves the port in the slot the closed forms assume, and each
/// approach link frees up exactly one quantum ahead of it.
fn stream_delivery(topo: &Topology, c: Coord, along_rows: bool, diag: bool) -> Result<f64> {
    let g = topo.global_of(c)?;
    let count = if along_rows { topo.spec().x } else { topo.spec().y };
    let anchor = if along_rows { g.0 } else { g.1 };
    let own = if along_rows { c.0 } else { c.1 };
    let depth = own.abs_diff(anchor);

    // Lines on the measured chiplet's side of the attach point, beyond it.
    let mut deeper: Vec<usize> = (0..count)
        .filter(|&l| l.abs_diff(anchor) > depth && (l > anchor) == (own > anchor) && own != anchor)
        .collect();
    deeper.sort_by_key(|&l| std::cmp::Reverse(l.abs_diff(anchor)));
    let fillers = count - 1 - depth - deeper.len();

    let mut flows = Vec::with_capacity(count);
    for _ in 0..fillers {
        flows.push(Flow::new(Node::Memory, g, VALIDATE_CHUNK, vec![(Node::Memory, Node::Chip(g))]));
    }
    for &line in &deeper {
        let peer_dst = if along_rows { (line, g.1) } else { (g.0, line) };
        let mut route = vec![(Node::Memory, Node::Chip(g))];
        route.extend(mesh_path(g, peer_dst));
        flows.push(Flow::new(Node::Memory, peer_dst, VALIDATE_CHUNK, route));
    }
    let route_tail = if diag {
        diagonal_path(topo, g, c)
    } else {
        let turn = if along_rows { (c.0, g.1) } else { (g.0, c.1) };
        let mut r = mesh_path(g, turn);
        r.extend(mesh_path(turn, c));
        r
    };
    let mut route = vec![(Node::Memory, Node::Chip(g))];
    route.extend(route_tail);
    flows.push(Flow::new(Node::Memory, c, VALIDATE_CHUNK, route));
    let measured_index = flows.len() - 1;

    // The memory port must serialize at the package rate so every crossing
    // is one event quantum.
    let result = simulate(topo, &flows, VALIDATE_BW, VALIDATE_BW)?;
    Ok(result.deliveries_s[measured_index])
}

/// Unobstructed single-chunk delivery from the serving global.
fn solo_delivery(topo: &Topology, c: Coord) -> Result<f64> {
    let g = topo.global_of(c)?;
    let route = mesh_path(g, c);
    let flow = Flow::new(Node::Chip(g), c, VALIDATE_CHUNK, route);
    let result = simulate(topo, &[flow], VALIDATE_BW, VALIDATE_BW)?;
    Ok(result.deliveries_s[0])
}

/// Replays the delivery pattern behind `strategy` for every chiplet and
/// compares the simulated arrival against [`Topology::hops`], tolerating
/// one event quantum. `DiagonalShared` needs diagonal links; on a plain
/// mesh the report comes back with zero chiplets checked.
pub fn validate_hops(topo: &Topology, strategy: HopStrategy) -> Result<ValidationReport> {
    let quantum = VALIDATE_CHUNK as f64 / VALIDATE_BW;
    let mut report = ValidationReport { checked: 0, mismatches: Vec::new() };
    if strategy == HopStrategy::DiagonalShared && !topo.spec().diagonal_links {
        return Ok(report);
    }
    for c in topo.chiplets() {
        let expected = topo.hops(c, strategy)?;
        let delivery = match strategy {
            HopStrategy::LowBw | HopStrategy::NonShared => solo_delivery(topo, c)?,
            HopStrategy::RowShared => {
                // With diagonal links the broadcast takes the staircase
                // whenever the closed form says it is strictly shorter.
                let (_, ly) = topo.local_index(c)?;
                let plain = topo.spec().x as u64 + ly as u64;
                let use_diag = topo.spec().diagonal_links && expected < plain;
                stream_delivery(topo, c, true, use_diag)?
            }
            HopStrategy::ColShared => stream_delivery(topo, c, false, false)?,
            HopStrategy::DiagonalShared => stream_delivery(topo, c, true, true)?,
        };
        let measured = delivery / quantum;
        report.checked += 1;
        if (measured - expected as f64).abs() > 1.0 + 1e-6 {
            report.mismatches.push(HopMismatch {
                chiplet: c,
                expected_hops: expected,
                measured_quanta: measured,
            });
        }
    }
    Ok(report)
}
