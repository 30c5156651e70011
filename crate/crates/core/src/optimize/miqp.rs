//! Integer-quadratic model of the end-to-end cost.
//!
//! Each operator axis contributes one integer variable per grid row
//! (column), counting whole units of the array height (width); forced
//! axes — single rows, or dimensions smaller than one unit — contribute
//! none. Per operator, one continuous auxiliary variable `z` takes the
//! maximum of the per-chiplet compute expression and the per-chiplet
//! input-distribution expression, modeling the overlap of loading with
//! computing; the objective sums the `z`s and the partition-independent
//! phases.
//!
//! Every cost term is division-free: the distinct constant denominators
//! (clock rate, link and memory bandwidths) are cleared by multiplying
//! all coefficients by their product, then everything is rescaled by a
//! single factor `S` so magnitudes stay manageable. The argmin is
//! invariant under any positive `S`. A data-dependent denominator `c + x`
//! would be replaced by the first-order form [`approx_inverse`] gives;
//! the terms built here all carry constant denominators.
//!
//! The model is deliberately evaluable without any solver: the exact
//! backend and the brute-force oracle both score assignments through
//! [`evaluate_model`], so their comparisons are free of re-derivation
//! drift.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;

use crate::costmodel::{
    self, collect_latency, compute_latency_chiplet, offchip_latency, BwRegime, CostParams,
    ModelOptions, Partition,
};
use crate::error::{Error, Result};
use crate::topology::{HopStrategy, Topology};
use crate::workload::TaskSequence;

use super::{
    op_bounds, solve, uniform_partition, AxisBounds, Backend, Objective, SolveResult,
};

/// Default global rescale divisor (2^20).
pub const DEFAULT_SCALE: f64 = 1_048_576.0;

/// First-order replacement for `1/(c + x)`: exact at `x = 0`, and within
/// `(x/c)²` relative error elsewhere.
pub fn approx_inverse(c: f64, x: f64) -> f64 {
    (c - x) / (c * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    /// Integer unit count of one partition entry.
    Int,
    /// Continuous per-operator maximum.
    Aux,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lo: u64,
    /// `None` leaves the variable unbounded above (auxiliaries).
    pub hi: Option<u64>,
}

/// One objective or constraint term: `coeff`, times `vars[a]` if set,
/// times `vars[b]` if set. Degree ≤ 2 by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub coeff: f64,
    pub a: Option<usize>,
    pub b: Option<usize>,
}

impl Term {
    fn constant(coeff: f64) -> Self {
        Term { coeff, a: None, b: None }
    }

    fn linear(coeff: f64, a: usize) -> Self {
        Term { coeff, a: Some(a), b: None }
    }

    pub fn degree(&self) -> usize {
        usize::from(self.a.is_some()) + usize::from(self.b.is_some())
    }
}

/// `Σ vars = total` over one operator axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumConstraint {
    pub name: String,
    pub vars: Vec<usize>,
    pub total: u64,
}

/// `z = max` over candidate expressions (each a term sum free of
/// auxiliary variables).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxGroup {
    pub z: usize,
    pub candidates: Vec<Vec<Term>>,
}

/// Where one operator axis lives in the variable vector.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisLayout {
    /// No variables: the axis has exactly one admissible split.
    Fixed(Vec<u64>),
    /// `bounds.parts` consecutive variables starting at `first_var`.
    Units { first_var: usize, bounds: AxisBounds },
}

/// The assembled model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadModel {
    pub vars: Vec<VarDef>,
    pub sums: Vec<SumConstraint>,
    pub max_groups: Vec<MaxGroup>,
    /// Minimized; constant terms have both variable slots empty.
    pub objective: Vec<Term>,
    /// Multiplier applied to every coefficient: denominator product / S.
    pub scale: f64,
    /// The rescale divisor S this model was built with.
    pub scale_s: f64,
    pub objective_kind: Objective,
    /// Per-operator (row-axis, column-axis) variable layout.
    pub layout: Vec<(AxisLayout, AxisLayout)>,
}

impl QuadModel {
    pub fn int_var_count(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Int).count()
    }

    pub fn aux_var_count(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Aux).count()
    }
}

/// One partition-axis operand of a product: an optional variable plus a
/// constant offset, both pre-scaled by a common factor.
#[derive(Clone, Copy)]
struct Operand {
    var: Option<usize>,
    var_coeff: f64,
    constant: f64,
}

impl Operand {
    fn times(self, other: Operand, coeff: f64) -> Vec<Term> {
        let mut terms = Vec::new();
        if let (Some(a), Some(b)) = (self.var, other.var) {
            terms.push(Term { coeff: coeff * self.var_coeff * other.var_coeff, a: Some(a), b: Some(b) });
        }
        if let Some(a) = self.var {
            let c = coeff * self.var_coeff * other.constant;
            if c != 0.0 {
                terms.push(Term::linear(c, a));
            }
        }
        if let Some(b) = other.var {
            let c = coeff * self.constant * other.var_coeff;
            if c != 0.0 {
                terms.push(Term::linear(c, b));
            }
        }
        let c = coeff * self.constant * other.constant;
        if c != 0.0 {
            terms.push(Term::constant(c));
        }
        terms
    }

    fn scaled(self, factor: f64) -> Vec<Term> {
        let mut terms = Vec::new();
        if let Some(a) = self.var {
            terms.push(Term::linear(self.var_coeff * factor, a));
        }
        if self.constant != 0.0 {
            terms.push(Term::constant(self.constant * factor));
        }
        terms
    }

    fn is_zero(&self) -> bool {
        self.var.is_none() && self.constant == 0.0
    }
}

/// Builds the model with the default rescale divisor.
pub fn build_miqp(
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
) -> Result<QuadModel> {
    build_miqp_scaled(task, topo, params, objective, DEFAULT_SCALE)
}

/// Builds the model with an explicit rescale divisor `S > 0`.
///
/// For the latency objective the model value is (scaled) seconds:
/// partition-independent phases enter as constants, and each operator
/// contributes `z = max(compute, input distribution)` over all chiplets.
/// For EDP — a degree-4 product if taken literally — the model minimizes
/// the degree-2 surrogate `latency × energy-at-even-split + energy ×
/// latency-at-even-split`; the true EDP of the returned partition is what
/// gets reported by the callers.
pub fn build_miqp_scaled(
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    scale_s: f64,
) -> Result<QuadModel> {
    assert!(scale_s > 0.0, "rescale divisor must be positive");
    let x = topo.spec().x;
    let y = topo.spec().y;
    let regime = params.regime();

    // Variable layout: all integer unit variables first (operators in
    // order, rows before columns), then one auxiliary per operator.
    let mut vars: Vec<VarDef> = Vec::new();
    let mut sums: Vec<SumConstraint> = Vec::new();
    let mut layout: Vec<(AxisLayout, AxisLayout)> = Vec::new();
    for (i, op) in task.ops.iter().enumerate() {
        let (bx, by) = op_bounds(op, x, y, params.r, params.c);
        let mut axis = |bounds: AxisBounds, prefix: &str, kind: &str| -> AxisLayout {
            if bounds.tiny || bounds.parts == 1 {
                let split = if bounds.tiny {
                    bounds.tiny_layout()
                } else {
                    bounds.decode(&bounds.even_units())
                };
                return AxisLayout::Fixed(split);
            }
            let first_var = vars.len();
            for row in 0..bounds.parts {
                vars.push(VarDef {
                    name: format!("{prefix}{i}_{row}"),
                    kind: VarKind::Int,
                    lo: bounds.lo_at(row),
                    hi: Some(bounds.hi),
                });
            }
            sums.push(SumConstraint {
                name: format!("{kind}{i}"),
                vars: (first_var..first_var + bounds.parts).collect(),
                total: bounds.q_units,
            });
            AxisLayout::Units { first_var, bounds }
        };
        let lx = axis(bx, "u", "rows");
        let ly = axis(by, "v", "cols");
        layout.push((lx, ly));
    }
    let mut aux_of_op = Vec::with_capacity(task.ops.len());
    for i in 0..task.ops.len() {
        aux_of_op.push(vars.len());
        vars.push(VarDef { name: format!("z{i}"), kind: VarKind::Aux, lo: 0, hi: None });
    }

    // Distinct constant denominators, cleared from every coefficient by
    // multiplying through with their product.
    let mut denoms: BTreeSet<u64> = BTreeSet::new();
    denoms.insert(params.freq_hz.to_bits());
    denoms.insert(params.bw_mem.to_bits());
    denoms.insert(params.bw_nop.to_bits());
    if topo.entry_links() > 0 {
        denoms.insert((topo.entry_links() as f64 * params.bw_nop).to_bits());
    }
    let denom_product: f64 = denoms.iter().map(|&b| f64::from_bits(b)).product();
    let scale = denom_product / scale_s;

    // Row/column operands: unit variable (or forced constant) per entry.
    let operand = |axis: &AxisLayout, entry: usize, step: u64, per_unit: f64| -> Operand {
        match axis {
            AxisLayout::Fixed(split) => Operand {
                var: None,
                var_coeff: 0.0,
                constant: split[entry] as f64 / step as f64 * per_unit,
            },
            AxisLayout::Units { first_var, bounds } => {
                let rem = if entry == 0 { bounds.rem } else { 0 };
                Operand {
                    var: Some(first_var + entry),
                    var_coeff: per_unit,
                    constant: rem as f64 / step as f64 * per_unit,
                }
            }
        }
    };
    // ⌈split/step⌉ as an affine operand: whole units plus one extra fold
    // when the remainder rides on this entry.
    let folds = |axis: &AxisLayout, entry: usize, step: u64| -> Operand {
        match axis {
            AxisLayout::Fixed(split) => Operand {
                var: None,
                var_coeff: 0.0,
                constant: split[entry].div_ceil(step) as f64,
            },
            AxisLayout::Units { first_var, bounds } => {
                let extra = if entry == 0 && bounds.rem > 0 { 1.0 } else { 0.0 };
                Operand { var: Some(first_var + entry), var_coeff: 1.0, constant: extra }
            }
        }
    };

    let mut latency_const = 0.0f64;
    let mut latency_z: Vec<Term> = Vec::new();
    let mut energy_terms: Vec<Term> = Vec::new();
    let mut max_groups: Vec<MaxGroup> = Vec::new();
    for (i, op) in task.ops.iter().enumerate() {
        let (lx, ly) = &layout[i];
        let bpe = u64::from(op.bytes_per_element) as f64;
        let pass = compute_latency_chiplet(params.r, params.c, op.k, params.r, params.c) as f64;
        let load_bytes = (op.a_bytes() + op.b_bytes()) as f64;
        let out_bytes = op.out_bytes() as f64;

        latency_const += offchip_latency(op.a_bytes() + op.b_bytes(), params)
            + collect_latency(op, topo, params)
            + offchip_latency(op.out_bytes(), params);
        latency_z.push(Term::linear(1.0, aux_of_op[i]));

        let mut candidates: Vec<Vec<Term>> = Vec::new();
        for gx in 0..x {
            for gy in 0..y {
                // Compute: pass cycles per fold pair, folds affine in the
                // unit counts.
                let fx = folds(lx, gx, params.r);
                let fy = folds(ly, gy, params.c);
                if !(fx.is_zero() || fy.is_zero()) {
                    let c = fx.times(fy, pass / params.freq_hz);
                    if !c.is_empty() {
                        candidates.push(c);
                    }
                }

                // Input distribution, by bandwidth regime. The A chunk is
                // the row share times the full depth; the B chunk is the
                // depth times the column share.
                if topo.entry_links() > 0 {
                    let a_chunk = operand(lx, gx, params.r, params.r as f64 * op.k as f64 * bpe);
                    let b_chunk = operand(ly, gy, params.c, params.c as f64 * op.k as f64 * bpe);
                    let mut comm: Vec<Term> = Vec::new();
                    match regime {
                        BwRegime::LowBw => {
                            let h = topo.hops((gx, gy), HopStrategy::LowBw)? as f64;
                            comm.extend(a_chunk.scaled(h / params.bw_nop));
                            comm.extend(b_chunk.scaled(h / params.bw_nop));
                        }
                        BwRegime::HighBw => {
                            let ha = topo.hops((gx, gy), HopStrategy::RowShared)? as f64;
                            let hb = topo.hops((gx, gy), HopStrategy::ColShared)? as f64;
                            comm.extend(a_chunk.scaled(ha / params.bw_nop));
                            comm.extend(b_chunk.scaled(hb / params.bw_nop));
                        }
                    }
                    if !comm.is_empty() {
                        candidates.push(comm);
                    }
                }
            }
        }
        max_groups.push(MaxGroup { z: aux_of_op[i], candidates });

        // Energy. Static data movement is partition-independent; the MAC
        // term is exact; the on-package movement enters as per-chiplet
        // chunk × hop products — an upper bound of the shared-tree
        // traffic, adequate for steering the surrogate search.
        energy_terms.push(Term::constant(
            params.e_sram * 8.0 * (load_bytes + out_bytes)
                + params.e_offchip * 8.0 * (load_bytes + out_bytes),
        ));
        for gx in 0..x {
            for gy in 0..y {
                let fx = folds(lx, gx, params.r);
                let fy = folds(ly, gy, params.c);
                if !(fx.is_zero() || fy.is_zero()) {
                    let coeff = params.e_mac * pass * (params.r * params.c) as f64;
                    energy_terms.extend(fx.times(fy, coeff));
                }
                if topo.entry_links() > 0 {
                    let h_low = topo.hops((gx, gy), HopStrategy::LowBw)? as f64;
                    let px = operand(lx, gx, params.r, params.r as f64);
                    let py = operand(ly, gy, params.c, params.c as f64);
                    // Collected output block of this chiplet.
                    energy_terms.extend(px.times(py, params.e_nop * 8.0 * bpe * h_low));
                    let a_chunk = operand(lx, gx, params.r, params.r as f64 * op.k as f64 * bpe);
                    let b_chunk = operand(ly, gy, params.c, params.c as f64 * op.k as f64 * bpe);
                    let (ha, hb) = match regime {
                        BwRegime::LowBw => (h_low, h_low),
                        BwRegime::HighBw => (
                            topo.hops((gx, gy), HopStrategy::RowShared)? as f64,
                            topo.hops((gx, gy), HopStrategy::ColShared)? as f64,
                        ),
                    };
                    energy_terms.extend(a_chunk.scaled(params.e_nop * 8.0 * ha));
                    energy_terms.extend(b_chunk.scaled(params.e_nop * 8.0 * hb));
                }
            }
        }
    }

    let mut objective_terms: Vec<Term> = Vec::new();
    match objective {
        Objective::Latency => {
            objective_terms.push(Term::constant(latency_const));
            objective_terms.extend(latency_z);
        }
        Objective::Edp => {
            // Degree-2 surrogate: cross-weight each additive metric by
            // the other metric's value at the even split.
            let parts: Vec<Partition> = task
                .ops
                .iter()
                .map(|op| uniform_partition(op, x, y, params.r, params.c))
                .collect();
            let at_uniform = costmodel::end_to_end(
                task,
                &parts,
                topo,
                params,
                &ModelOptions::default(),
            )?;
            let e_u = at_uniform.energy_j;
            let l_u = at_uniform.latency_s;
            objective_terms.push(Term::constant(latency_const * e_u));
            for t in latency_z {
                objective_terms.push(Term { coeff: t.coeff * e_u, ..t });
            }
            for t in energy_terms {
                objective_terms.push(Term { coeff: t.coeff * l_u, ..t });
            }
        }
    }

    // Candidates carry the scale, so each auxiliary is already in scaled
    // units; its objective coefficient must stay unscaled to avoid
    // applying the factor twice.
    let touches_aux = |t: &Term| {
        [t.a, t.b].into_iter().flatten().any(|v| vars[v].kind == VarKind::Aux)
    };
    for t in &mut objective_terms {
        if !touches_aux(t) {
            t.coeff *= scale;
        }
    }
    for g in &mut max_groups {
        for cand in &mut g.candidates {
            for t in cand.iter_mut() {
                t.coeff *= scale;
            }
        }
    }

    Ok(QuadModel {
        vars,
        sums,
        max_groups,
        objective: objective_terms,
        scale,
        scale_s,
        objective_kind: objective,
        layout,
    })
}

/// Scores an assignment of the integer variables: each auxiliary takes
/// its group's maximum, then the objective terms are summed. `values`
/// entries at auxiliary positions are ignored.
pub fn evaluate_model(model: &QuadModel, values: &[i64]) -> f64 {
    debug_assert_eq!(values.len(), model.vars.len());
    let mut vals: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    let eval_terms = |terms: &[Term], vals: &[f64]| -> f64 {
        terms
            .iter()
            .map(|t| {
                let a = t.a.map_or(1.0, |i| vals[i]);
                let b = t.b.map_or(1.0, |i| vals[i]);
                t.coeff * a * b
            })
            .sum()
    };
    for group in &model.max_groups {
        let z = group
            .candidates
            .iter()
            .map(|cand| eval_terms(cand, &vals))
            .fold(0.0f64, f64::max);
        vals[group.z] = z;
    }
    eval_terms(&model.objective, &vals)
}

/// Maps per-operator partitions onto the model's integer variables.
/// Fails when a partition lies off the model's lattice.
pub fn encode_partitions(model: &QuadModel, parts: &[Partition]) -> Result<Vec<i64>> {
    if parts.len() != model.layout.len() {
        return Err(Error::InvalidPartition(format!(
            "{} partitions for a {}-operator model",
            parts.len(),
            model.layout.len()
        )));
    }
    let mut values = vec![0i64; model.vars.len()];
    for (i, (part, (lx, ly))) in parts.iter().zip(&model.layout).enumerate() {
        for (axis, split) in [(lx, &part.px), (ly, &part.py)] {
            match axis {
                AxisLayout::Fixed(expect) => {
                    if split != expect {
                        return Err(Error::InvalidPartition(format!(
                            "operator {i}: axis split {split:?} differs from the forced {expect:?}"
                        )));
                    }
                }
                AxisLayout::Units { first_var, bounds } => {
                    let units = bounds.encode(split).ok_or_else(|| {
                        Error::InvalidPartition(format!(
                            "operator {i}: split {split:?} is off the unit lattice"
                        ))
                    })?;
                    for (k, u) in units.iter().enumerate() {
                        values[first_var + k] = *u as i64;
                    }
                }
            }
        }
    }
    Ok(values)
}

/// Expands an integer assignment back into per-operator partitions.
pub fn decode_values(model: &QuadModel, values: &[i64]) -> Vec<Partition> {
    model
        .layout
        .iter()
        .map(|(lx, ly)| {
            let decode_axis = |axis: &AxisLayout| -> Vec<u64> {
                match axis {
                    AxisLayout::Fixed(split) => split.clone(),
                    AxisLayout::Units { first_var, bounds } => {
                        let units: Vec<u64> = (0..bounds.parts)
                            .map(|k| values[first_var + k].max(0) as u64)
                            .collect();
                        bounds.decode(&units)
                    }
                }
            };
            Partition::new(decode_axis(lx), decode_axis(ly))
        })
        .collect()
}

/// Builds the model, solves it with the exact backend, and reports the
/// decoded partitions with their true end-to-end cost next to the model
/// objective.
pub fn miqp_optimize(
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    options: &ModelOptions,
    time_limit_s: f64,
) -> Result<SolveResult> {
    let start = Instant::now();
    let model = build_miqp(task, topo, params, objective)?;
    let solution = solve(&model, Backend::Exact, time_limit_s)?;
    let breakdown = costmodel::end_to_end(task, &solution.partitions, topo, params, options)?;
    Ok(SolveResult {
        value: objective.value_of(&breakdown),
        partitions: solution.partitions,
        gathers: Vec::new(),
        objective,
        model_value: Some(solution.model_value),
        breakdown,
        wall_s: start.elapsed().as_secs_f64(),
        status: solution.status,
    })
}
