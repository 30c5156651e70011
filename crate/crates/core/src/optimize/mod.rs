//! Partition-space search: uniform and distance-weighted baselines, a
//! genetic algorithm, and an integer-quadratic formation with an exact
//! desk-scale solver plus an LP export for external solvers.
//!
//! All searchers share one lattice: each operator's row split `px` is a
//! vector of multiples of the array height `R` (the division remainder
//! rides on row 0), bounded around the even split, and summing to the
//! operator's `M`; columns mirror this with `C` and `N`. Baselines pick a
//! single point, the GA walks the lattice, and the quadratic model and its
//! solvers enumerate or relax it.

mod baselines;
mod exact;
mod ga;
mod lp;
mod miqp;

pub use baselines::{simba_optimize, simba_partition, uniform_optimize, uniform_partition};
pub use exact::{solve, Backend, ModelSolution, EXACT_CANDIDATE_LIMIT};
pub use ga::{ga_optimize, GaConfig, Genome};
pub use lp::{export_lp, read_solution};
pub use miqp::{
    approx_inverse, build_miqp, build_miqp_scaled, decode_values, encode_partitions,
    evaluate_model, miqp_optimize, AxisLayout, MaxGroup, QuadModel, SumConstraint, Term, VarDef,
    VarKind, DEFAULT_SCALE,
};

use std::fmt;

use serde::Serialize;

use crate::costmodel::{CostBreakdown, Partition};

/// What a search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// End-to-end seconds.
    Latency,
    /// Latency × energy.
    Edp,
}

impl Objective {
    /// Reads the objective off an evaluated breakdown.
    pub fn value_of(self, breakdown: &CostBreakdown) -> f64 {
        match self {
            Objective::Latency => breakdown.latency_s,
            Objective::Edp => breakdown.edp_js,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Latency => write!(f, "latency"),
            Objective::Edp => write!(f, "edp"),
        }
    }
}

/// How a solve ended.
///
/// `Optimal` is reserved for searches that provably exhausted their space
/// (the exact backend, and the closed-form baselines whose output is their
/// definition). Budgeted searches — the GA's generation budget, a solver
/// hitting its time limit, or an ingested external solution whose
/// optimality we cannot check — report `FeasibleTimeout`: a feasible
/// incumbent, stopped by a budget rather than by proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    #[serde(rename = "optimal")]
    Optimal,
    #[serde(rename = "feasible-timeout")]
    FeasibleTimeout,
    #[serde(rename = "infeasible")]
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::FeasibleTimeout => write!(f, "feasible-timeout"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
        }
    }
}

/// Outcome of any optimizer: the chosen partitions and their evaluated
/// cost, plus search metadata.
#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// One partition per operator.
    pub partitions: Vec<Partition>,
    /// Gather columns per chained pair, where the search chose them
    /// (empty otherwise).
    pub gathers: Vec<Vec<usize>>,
    pub objective: Objective,
    /// True cost of `partitions` under the evaluation options.
    pub value: f64,
    /// Quadratic-model objective (scaled model units), for model-based
    /// solvers.
    pub model_value: Option<f64>,
    pub breakdown: CostBreakdown,
    pub wall_s: f64,
    pub status: SolveStatus,
}

/// Unit-lattice description of one partition axis.
///
/// An axis splitting dimension `m` across `parts` rows in multiples of
/// `step` has `q_units = ⌊m/step⌋` whole units to place and `rem = m mod
/// step` extra rows that always ride on row 0. A non-tiny axis constrains
/// every entry's unit count to `[lo, hi]` (row 0 additionally to ≥ 1 when
/// it carries a remainder); a tiny axis (`m < step`) has the single
/// layout `[m, 0, …]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisBounds {
    pub parts: usize,
    pub step: u64,
    pub m: u64,
    pub q_units: u64,
    pub rem: u64,
    pub lo: u64,
    pub hi: u64,
    pub tiny: bool,
}

impl AxisBounds {
    /// Lower bound for the given row (row 0 must stay populated when it
    /// carries the remainder).
    pub fn lo_at(&self, row: usize) -> u64 {
        if row == 0 && self.rem > 0 {
            self.lo.max(1)
        } else {
            self.lo
        }
    }

    /// Whether `units` is a feasible placement for this axis.
    pub fn admits(&self, units: &[u64]) -> bool {
        units.len() == self.parts
            && units.iter().sum::<u64>() == self.q_units
            && units.iter().enumerate().all(|(i, &u)| u >= self.lo_at(i) && u <= self.hi)
    }

    /// The even placement: units split round-robin, extras to the first
    /// rows.
    pub fn even_units(&self) -> Vec<u64> {
        let n = self.parts as u64;
        (0..self.parts)
            .map(|i| self.q_units / n + u64::from((i as u64) < self.q_units % n))
            .collect()
    }

    /// Expands unit counts into the per-row dimension split.
    pub fn decode(&self, units: &[u64]) -> Vec<u64> {
        if self.tiny {
            return self.tiny_layout();
        }
        units
            .iter()
            .enumerate()
            .map(|(i, &u)| self.step * u + if i == 0 { self.rem } else { 0 })
            .collect()
    }

    /// Recovers unit counts from a per-row split, if it lies on the
    /// lattice.
    pub fn encode(&self, split: &[u64]) -> Option<Vec<u64>> {
        if self.tiny {
            return (split == self.tiny_layout()).then(Vec::new);
        }
        split
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let body = p.checked_sub(if i == 0 { self.rem } else { 0 })?;
                (body % self.step == 0).then_some(body / self.step)
            })
            .collect()
    }

    /// The forced layout of a tiny axis.
    pub fn tiny_layout(&self) -> Vec<u64> {
        let mut v = vec![0u64; self.parts];
        v[0] = self.m;
        v
    }

    /// All feasible unit placements, in lexicographic order.
    pub fn enumerate(&self) -> Vec<Vec<u64>> {
        if self.tiny {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(self.parts);
        self.enumerate_rec(0, self.q_units, &mut prefix, &mut out);
        out
    }

    fn enumerate_rec(
        &self,
        row: usize,
        left: u64,
        prefix: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        if row == self.parts {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        let rest = self.parts - row - 1;
        let min_rest: u64 = (row + 1..self.parts).map(|i| self.lo_at(i)).sum();
        let max_rest = self.hi * rest as u64;
        for u in self.lo_at(row)..=self.hi.min(left) {
            let remaining = left - u;
            if remaining < min_rest || remaining > max_rest {
                continue;
            }
            prefix.push(u);
            self.enumerate_rec(row + 1, remaining, prefix, out);
            prefix.pop();
        }
    }
}

/// Lattice bounds for one axis: dimension `m` split over `parts` rows in
/// multiples of `step`.
///
/// The per-entry window sits around the even split `q = ⌈m/(parts·step)⌉`:
/// `[max(q−2, 1), q+2]` units, widened to admit zero entries when fewer
/// units than rows exist, and tightened so the window always contains a
/// feasible sum.
pub fn axis_bounds(m: u64, parts: usize, step: u64) -> AxisBounds {
    assert!(parts > 0 && step > 0 && m > 0, "degenerate axis");
    let tiny = m < step;
    let q_units = m / step;
    let rem = m % step;
    let (lo, hi) = if tiny {
        (0, 0)
    } else {
        let q = m.div_ceil(parts as u64 * step);
        let hi = q + 2;
        let lo = if q_units < parts as u64 {
            0
        } else {
            (q.saturating_sub(2)).max(1).min(q_units / parts as u64)
        };
        (lo, hi)
    };
    AxisBounds { parts, step, m, q_units, rem, lo, hi, tiny }
}

/// Both axes of one operator on a given grid.
pub(crate) fn op_bounds(
    op: &crate::workload::GemmOp,
    x: usize,
    y: usize,
    r: u64,
    c: u64,
) -> (AxisBounds, AxisBounds) {
    (axis_bounds(op.m, x, r), axis_bounds(op.n, y, c))
}
