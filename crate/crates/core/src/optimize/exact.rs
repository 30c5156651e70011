//! Solvers for the quadratic model: an exact desk-scale backend that
//! enumerates the bounded unit lattice, and an external hand-off that
//! writes the LP file and ingests a solution file.
//!
//! The model's objective never couples variables of different operators,
//! so the exact backend splits the search by operator and enumerates each
//! operator's row × column placements independently, pruning infeasible
//! prefixes. The search-space gate counts the per-operator candidate
//! partitions it will visit; instances over the cap are refused rather
//! than half-searched.

use std::path::Path;
use std::time::Instant;

use crate::costmodel::Partition;
use crate::error::{Error, Result};

use super::lp::{export_lp, read_solution, values_from_solution};
use super::miqp::{decode_values, evaluate_model, AxisLayout, QuadModel, Term};
use super::SolveStatus;

/// Hard cap on enumerated candidate partitions.
pub const EXACT_CANDIDATE_LIMIT: u64 = 10_000_000;

/// How to solve the model.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    /// Enumerate the lattice in-process and prove the optimum.
    Exact,
    /// Write the LP to `lp_path`, then read the externally produced
    /// `solution_path` (plain `name value` lines).
    External { lp_path: &'a Path, solution_path: &'a Path },
}

/// A solved model: the integer assignment, its decoded partitions, and
/// the model objective value.
#[derive(Debug, Clone)]
pub struct ModelSolution {
    pub partitions: Vec<Partition>,
    pub values: Vec<i64>,
    pub model_value: f64,
    pub wall_s: f64,
    pub status: SolveStatus,
}

/// Solves the model. `time_limit_s` bounds the exact search: zero returns
/// the even-split incumbent immediately, and a search that outlives the
/// limit returns its best incumbent; both carry the feasible-timeout
/// status. A completed exact search is `optimal`. The external backend
/// reports `feasible-timeout` because the foreign solver's optimality
/// claim is not checkable here; its solution is still validated against
/// every constraint.
pub fn solve(model: &QuadModel, backend: Backend<'_>, time_limit_s: f64) -> Result<ModelSolution> {
    match backend {
        Backend::Exact => solve_exact(model, time_limit_s),
        Backend::External { lp_path, solution_path } => {
            let start = Instant::now();
            export_lp(model, lp_path)?;
            let solution = read_solution(solution_path)?;
            let values = values_from_solution(model, &solution)?;
            let model_value = evaluate_model(model, &values);
            Ok(ModelSolution {
                partitions: decode_values(model, &values),
                values,
                model_value,
                wall_s: start.elapsed().as_secs_f64(),
                status: SolveStatus::FeasibleTimeout,
            })
        }
    }
}

/// One operator's slice of the search: its variable span and the
/// objective/max-group terms that mention it.
struct OpSlice {
    row_choices: Vec<Vec<u64>>,
    col_choices: Vec<Vec<u64>>,
    row_vars: Option<(usize, usize)>,
    col_vars: Option<(usize, usize)>,
    groups: Vec<usize>,
    terms: Vec<Term>,
}

fn solve_exact(model: &QuadModel, time_limit_s: f64) -> Result<ModelSolution> {
    let start = Instant::now();
    let slices = partition_slices(model)?;

    let total_candidates: u64 = slices
        .iter()
        .map(|s| s.row_choices.len() as u64 * s.col_choices.len() as u64)
        .sum();
    if total_candidates > EXACT_CANDIDATE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            candidates: total_candidates,
            limit: EXACT_CANDIDATE_LIMIT,
        });
    }
    if slices.iter().any(|s| s.row_choices.is_empty() || s.col_choices.is_empty()) {
        return Ok(ModelSolution {
            partitions: Vec::new(),
            values: Vec::new(),
            model_value: f64::INFINITY,
            wall_s: start.elapsed().as_secs_f64(),
            status: SolveStatus::Infeasible,
        });
    }

    // Even-split incumbent: the fallback when the budget is zero or
    // expires, and the reference the search must never regress from.
    let even = even_values(model);
    let mut best_values = even;
    let mut timed_out = time_limit_s <= 0.0;

    if !timed_out {
        let mut visited = 0u64;
        'ops: for slice in &slices {
            // Operators are independent: pick each operator's best pair
            // of axis placements, preferring the lexicographically
            // smaller decoded partition on exact score ties.
            let mut best: Option<(f64, &Vec<u64>, &Vec<u64>)> = None;
            let mut scratch = best_values.clone();
            for rows in &slice.row_choices {
                if let Some((first, len)) = slice.row_vars {
                    scratch[first..first + len]
                        .iter_mut()
                        .zip(rows)
                        .for_each(|(s, &u)| *s = u as i64);
                }
                for cols in &slice.col_choices {
                    if let Some((first, len)) = slice.col_vars {
                        scratch[first..first + len]
                            .iter_mut()
                            .zip(cols)
                            .for_each(|(s, &u)| *s = u as i64);
                    }
                    let score = score_slice(model, slice, &scratch);
                    let better = match &best {
                        None => true,
                        Some((s, r, c)) => {
                            score < *s
                                || (score == *s && (rows, cols) < (*r, *c))
                        }
                    };
                    if better {
                        best = Some((score, rows, cols));
                    }
                    visited += 1;
                    if visited % 1024 == 0
                        && start.elapsed().as_secs_f64() > time_limit_s
                    {
                        timed_out = true;
                        break 'ops;
                    }
                }
            }
            let (_, rows, cols) = best.expect("non-empty choice lists");
            if let Some((first, len)) = slice.row_vars {
                best_values[first..first + len]
                    .iter_mut()
                    .zip(rows)
                    .for_each(|(s, &u)| *s = u as i64);
            }
            if let Some((first, len)) = slice.col_vars {
                best_values[first..first + len]
                    .iter_mut()
                    .zip(cols)
                    .for_each(|(s, &u)| *s = u as i64);
            }
        }
    }

    let model_value = evaluate_model(model, &best_values);
    Ok(ModelSolution {
        partitions: decode_values(model, &best_values),
        values: best_values,
        model_value,
        wall_s: start.elapsed().as_secs_f64(),
        status: if timed_out { SolveStatus::FeasibleTimeout } else { SolveStatus::Optimal },
    })
}

/// The even-split assignment used as incumbent.
fn even_values(model: &QuadModel) -> Vec<i64> {
    let mut values = vec![0i64; model.vars.len()];
    for (lx, ly) in &model.layout {
        for axis in [lx, ly] {
            if let AxisLayout::Units { first_var, bounds } = axis {
                for (k, u) in bounds.even_units().into_iter().enumerate() {
                    values[first_var + k] = u as i64;
                }
            }
        }
    }
    values
}

/// Splits the model by operator and checks that no objective term or max
/// group couples two operators (the additive structure the enumeration
/// relies on).
fn partition_slices(model: &QuadModel) -> Result<Vec<OpSlice>> {
    let mut owner = vec![usize::MAX; model.vars.len()];
    for (op, (lx, ly)) in model.layout.iter().enumerate() {
        for axis in [lx, ly] {
            if let AxisLayout::Units { first_var, bounds } = axis {
                for v in *first_var..first_var + bounds.parts {
                    owner[v] = op;
                }
            }
        }
    }
    // One auxiliary per operator, in order.
    for (gi, group) in model.max_groups.iter().enumerate() {
        owner[group.z] = gi;
    }

    let op_of_term = |t: &Term| -> Option<usize> {
        let mut op = None;
        for v in [t.a, t.b].into_iter().flatten() {
            let o = owner[v];
            debug_assert_ne!(o, usize::MAX);
            match op {
                None => op = Some(o),
                Some(prev) => {
                    assert_eq!(prev, o, "objective couples operators {prev} and {o}");
                }
            }
        }
        op
    };

    let mut slices: Vec<OpSlice> = model
        .layout
        .iter()
        .map(|(lx, ly)| {
            let axis_choices = |axis: &AxisLayout| -> (Vec<Vec<u64>>, Option<(usize, usize)>) {
                match axis {
                    AxisLayout::Fixed(_) => (vec![Vec::new()], None),
                    AxisLayout::Units { first_var, bounds } => {
                        (bounds.enumerate(), Some((*first_var, bounds.parts)))
                    }
                }
            };
            let (row_choices, row_vars) = axis_choices(lx);
            let (col_choices, col_vars) = axis_choices(ly);
            OpSlice { row_choices, col_choices, row_vars, col_vars, groups: Vec::new(),
                      terms: Vec::new() }
        })
        .collect();

    for (gi, group) in model.max_groups.iter().enumerate() {
        for cand in &group.candidates {
            for t in cand {
                if let Some(op) = op_of_term(t) {
                    assert_eq!(op, gi, "max group {gi} references operator {op}");
                }
            }
        }
        slices[gi].groups.push(gi);
    }
    for t in &model.objective {
        match op_of_term(t) {
            // Per-operator terms (auxiliaries included) score inside
            // their slice; constants shift every slice equally and are
            // ignored during per-operator comparison.
            Some(op) => slices[op].terms.push(*t),
            None => {}
        }
    }
    Ok(slices)
}

/// Scores one operator's contribution for the assignment in `values`:
/// its auxiliaries' maxima substituted into its objective terms.
fn score_slice(model: &QuadModel, slice: &OpSlice, values: &[i64]) -> f64 {
    let eval = |terms: &[Term], z: &[(usize, f64)]| -> f64 {
        terms
            .iter()
            .map(|t| {
                let lookup = |v: usize| -> f64 {
                    if let Some(&(_, zv)) = z.iter().find(|&&(i, _)| i == v) {
                        zv
                    } else {
                        values[v] as f64
                    }
                };
                let a = t.a.map_or(1.0, lookup);
                let b = t.b.map_or(1.0, lookup);
                t.coeff * a * b
            })
            .sum()
    };
    let mut z_vals: Vec<(usize, f64)> = Vec::with_capacity(slice.groups.len());
    for &gi in &slice.groups {
        let group = &model.max_groups[gi];
        let z = group
            .candidates
            .iter()
            .map(|cand| eval(cand, &[]))
            .fold(0.0f64, f64::max);
        z_vals.push((group.z, z));
    }
    eval(&slice.terms, &z_vals)
}

#[cfg(test)]
mod tests {
    use super::super::miqp::{build_miqp, encode_partitions, VarKind};
    use super::super::{uniform_partition, Objective};
    use super::*;
    use crate::costmodel::CostParams;
    use crate::topology::{GridSpec, GridType, Topology};
    use crate::workload::gemm_chain;

    fn topo(x: usize, y: usize) -> Topology {
        Topology::build(GridSpec::new(x, y, GridType::A, false)).unwrap()
    }

    #[test]
    fn single_feasible_point_is_optimal() {
        // 1×1 grid: both axes are forced, the lattice has one point.
        let t = topo(1, 1);
        let task = gemm_chain(1, 64);
        let m = build_miqp(&task, &t, &CostParams::dram_defaults(), Objective::Latency).unwrap();
        let s = solve(&m, Backend::Exact, f64::INFINITY).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.partitions[0].px, vec![64]);
        assert_eq!(s.partitions[0].py, vec![64]);
    }

    #[test]
    fn matches_brute_force_over_the_whole_lattice() {
        let t = topo(2, 2);
        let task = gemm_chain(2, 64);
        let params = CostParams::hbm_defaults();
        let m = build_miqp(&task, &t, &params, Objective::Latency).unwrap();
        let s = solve(&m, Backend::Exact, f64::INFINITY).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);

        // Independent oracle: walk every feasible genome through the
        // public evaluator and keep the best under the same tie rule.
        let bounds: Vec<_> =
            task.ops.iter().map(|op| super::super::op_bounds(op, 2, 2, 16, 16)).collect();
        let mut best: Option<(f64, Vec<Partition>)> = None;
        for ux0 in bounds[0].0.enumerate() {
            for uy0 in bounds[0].1.enumerate() {
                for ux1 in bounds[1].0.enumerate() {
                    for uy1 in bounds[1].1.enumerate() {
                        let parts = vec![
                            Partition::new(bounds[0].0.decode(&ux0), bounds[0].1.decode(&uy0)),
                            Partition::new(bounds[1].0.decode(&ux1), bounds[1].1.decode(&uy1)),
                        ];
                        let values = encode_partitions(&m, &parts).unwrap();
                        let v = evaluate_model(&m, &values);
                        let key: Vec<&Vec<u64>> =
                            parts.iter().flat_map(|p| [&p.px, &p.py]).collect();
                        let better = match &best {
                            None => true,
                            Some((bv, bp)) => {
                                v < *bv
                                    || (v == *bv
                                        && key < bp
                                            .iter()
                                            .flat_map(|p| [&p.px, &p.py])
                                            .collect::<Vec<_>>())
                            }
                        };
                        if better {
                            best = Some((v, parts));
                        }
                    }
                }
            }
        }
        let (oracle_value, oracle_parts) = best.unwrap();
        assert_eq!(s.model_value, oracle_value);
        for (a, b) in s.partitions.iter().zip(&oracle_parts) {
            assert_eq!(a.px, b.px);
            assert_eq!(a.py, b.py);
        }
    }

    #[test]
    fn zero_budget_returns_the_even_split() {
        let t = topo(4, 4);
        let task = gemm_chain(2, 128);
        let m = build_miqp(&task, &t, &CostParams::dram_defaults(), Objective::Latency).unwrap();
        let s = solve(&m, Backend::Exact, 0.0).unwrap();
        assert_eq!(s.status, SolveStatus::FeasibleTimeout);
        let even: Vec<Partition> =
            task.ops.iter().map(|op| uniform_partition(op, 4, 4, 16, 16)).collect();
        for (a, b) in s.partitions.iter().zip(&even) {
            assert_eq!(a.px, b.px);
            assert_eq!(a.py, b.py);
        }
    }

    #[test]
    fn oversized_lattices_are_refused() {
        let t = topo(8, 8);
        let task = gemm_chain(1, 2048);
        let m = build_miqp(&task, &t, &CostParams::hbm_defaults(), Objective::Latency).unwrap();
        let err = solve(&m, Backend::Exact, f64::INFINITY).unwrap_err();
        assert!(matches!(err, Error::SearchSpaceTooLarge { .. }), "{err:?}");
    }

    #[test]
    fn never_above_the_even_split_under_the_model() {
        for dim in [64u64, 96, 160, 256] {
            let t = topo(4, 4);
            let task = gemm_chain(3, dim);
            let params = CostParams::hbm_defaults();
            let m = build_miqp(&task, &t, &params, Objective::Latency).unwrap();
            let s = solve(&m, Backend::Exact, f64::INFINITY).unwrap();
            let even: Vec<Partition> =
                task.ops.iter().map(|op| uniform_partition(op, 4, 4, 16, 16)).collect();
            let even_value = evaluate_model(&m, &encode_partitions(&m, &even).unwrap());
            assert!(s.model_value <= even_value, "{} > {even_value}", s.model_value);
        }
    }

    #[test]
    fn external_backend_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let lp = dir.path().join("model.lp");
        let sol = dir.path().join("model.sol");
        let t = topo(2, 2);
        let task = gemm_chain(1, 64);
        let m = build_miqp(&task, &t, &CostParams::dram_defaults(), Objective::Latency).unwrap();
        let exact = solve(&m, Backend::Exact, f64::INFINITY).unwrap();

        // Write the exact answer in the external solution format.
        let mut text = String::from("# external solver output\n");
        for (var, &v) in m.vars.iter().zip(&exact.values) {
            if var.kind == VarKind::Int {
                text.push_str(&format!("{} {}\n", var.name, v));
            }
        }
        std::fs::write(&sol, text).unwrap();

        let ext = solve(&m, Backend::External { lp_path: &lp, solution_path: &sol }, 0.0).unwrap();
        assert_eq!(ext.status, SolveStatus::FeasibleTimeout);
        assert_eq!(ext.model_value, exact.model_value);
        for (a, b) in ext.partitions.iter().zip(&exact.partitions) {
            assert_eq!(a.px, b.px);
        }
        assert!(lp.exists());

        // A solution violating the sum constraint is rejected.
        std::fs::write(&sol, "u0_0 4\nu0_1 4\nv0_0 2\nv0_1 2\n").unwrap();
        let err = solve(&m, Backend::External { lp_path: &lp, solution_path: &sol }, 0.0);
        assert!(err.is_err());
    }
}
