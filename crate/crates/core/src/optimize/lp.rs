//! Algebraic LP-format export and the matching plain-text solution
//! reader, for running the quadratic model through an external solver.
//!
//! The writer emits the common LP dialect: a `Minimize` objective whose
//! quadratic part sits in a `[ … ] / 2` block with doubled coefficients,
//! `Subject To` rows for the axis sums and for every `z ≥ candidate`
//! inequality (quadratic parts bracketed, not halved), explicit `Bounds`
//! for the integer variables, and a `Generals` list naming them. The
//! solution reader ingests `name value` lines (`#` and `\` start
//! comments), the format external MIP solvers commonly write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{MaxGroup, QuadModel, Term, VarDef, VarKind};

/// Renders the model as LP text.
pub fn lp_string(model: &QuadModel) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ quadratic partition model: {} operators, {} objective, scale {}",
        model.layout.len(),
        model.objective_kind,
        model.scale_s,
    );
    out.push_str("Minimize\n obj:\n");
    let (linear, quadratic) = split_terms(&model.objective);
    for t in &linear {
        let _ = writeln!(out, "   {}", linear_atom(t, &model.vars, 1.0));
    }
    if !quadratic.is_empty() {
        out.push_str("   + [\n");
        for t in &quadratic {
            let _ = writeln!(out, "     {}", quad_atom(t, &model.vars, 2.0));
        }
        out.push_str("   ] / 2\n");
    }

    out.push_str("Subject To\n");
    for sum in &model.sums {
        let mut row = format!(" {}:", sum.name);
        for &v in &sum.vars {
            let _ = write!(row, " + 1 {}", model.vars[v].name);
        }
        let _ = writeln!(out, "{row} = {}", sum.total);
    }
    for (gi, group) in model.max_groups.iter().enumerate() {
        write_group(&mut out, gi, group, &model.vars);
    }

    out.push_str("Bounds\n");
    for v in &model.vars {
        if v.kind == VarKind::Int {
            let _ = writeln!(out, " {} <= {} <= {}", v.lo, v.name, v.hi.expect("bounded"));
        }
    }

    out.push_str("Generals\n");
    for v in &model.vars {
        if v.kind == VarKind::Int {
            let _ = writeln!(out, " {}", v.name);
        }
    }
    out.push_str("End\n");
    out
}

/// Writes the LP text to `path`.
pub fn export_lp(model: &QuadModel, path: &Path) -> Result<()> {
    std::fs::write(path, lp_string(model))?;
    Ok(())
}

fn write_group(out: &mut String, gi: usize, group: &MaxGroup, vars: &[VarDef]) {
    for (ci, cand) in group.candidates.iter().enumerate() {
        let mut row = format!(" max{gi}_{ci}: + 1 {}", vars[group.z].name);
        let mut rhs = 0.0f64;
        let (linear, quadratic) = split_terms(cand);
        for t in &linear {
            if t.degree() == 0 {
                // Constants move to the right-hand side.
                rhs += t.coeff;
            } else {
                let _ = write!(row, " {}", linear_atom(&negate(t), vars, 1.0));
            }
        }
        if !quadratic.is_empty() {
            row.push_str(" + [");
            for t in &quadratic {
                let _ = write!(row, " {}", quad_atom(&negate(t), vars, 1.0));
            }
            row.push_str(" ]");
        }
        let _ = writeln!(out, "{row} >= {rhs}");
    }
}

fn negate(t: &Term) -> Term {
    Term { coeff: -t.coeff, ..*t }
}

fn split_terms(terms: &[Term]) -> (Vec<Term>, Vec<Term>) {
    let (quad, lin): (Vec<Term>, Vec<Term>) = terms.iter().partition(|t| t.degree() == 2);
    (lin, quad)
}

fn linear_atom(t: &Term, vars: &[VarDef], factor: f64) -> String {
    let c = t.coeff * factor;
    let sign = if c.is_sign_negative() { '-' } else { '+' };
    match t.a.or(t.b) {
        Some(v) => format!("{sign} {} {}", c.abs(), vars[v].name),
        None => format!("{sign} {}", c.abs()),
    }
}

fn quad_atom(t: &Term, vars: &[VarDef], factor: f64) -> String {
    let (a, b) = (t.a.expect("degree 2"), t.b.expect("degree 2"));
    let c = t.coeff * factor;
    let sign = if c.is_sign_negative() { '-' } else { '+' };
    if a == b {
        format!("{sign} {} {} ^ 2", c.abs(), vars[a].name)
    } else {
        format!("{sign} {} {} * {}", c.abs(), vars[a].name, vars[b].name)
    }
}

/// Reads a plain-text solver solution: one `name value` pair per line,
/// with `#` or `\` opening a comment line. Later duplicates win.
pub fn read_solution(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_solution(&text)
}

pub(crate) fn parse_solution(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('\\') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(name), Some(value)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse(format!(
                "solution line {}: expected 'name value', got '{raw}'",
                lineno + 1
            )));
        };
        if fields.next().is_some() {
            return Err(Error::Parse(format!(
                "solution line {}: trailing fields in '{raw}'",
                lineno + 1
            )));
        }
        let value: f64 = value.parse().map_err(|_| {
            Error::Parse(format!("solution line {}: bad number '{value}'", lineno + 1))
        })?;
        map.insert(name.to_string(), value);
    }
    Ok(map)
}

/// Checks a named solution against the model — every integer variable
/// present and integral, within bounds, sums satisfied — and returns the
/// full assignment vector (auxiliaries zeroed; they are derived).
pub(crate) fn values_from_solution(
    model: &QuadModel,
    solution: &BTreeMap<String, f64>,
) -> Result<Vec<i64>> {
    let mut values = vec![0i64; model.vars.len()];
    for (i, var) in model.vars.iter().enumerate() {
        if var.kind != VarKind::Int {
            continue;
        }
        let &v = solution
            .get(&var.name)
            .ok_or_else(|| Error::Parse(format!("solution misses variable '{}'", var.name)))?;
        let rounded = v.round();
        if (v - rounded).abs() > 1e-6 {
            return Err(Error::Infeasible(format!(
                "variable '{}' = {v} is not integral",
                var.name
            )));
        }
        let rounded = rounded as i64;
        if rounded < var.lo as i64 || var.hi.is_some_and(|hi| rounded > hi as i64) {
            return Err(Error::Infeasible(format!(
                "variable '{}' = {rounded} violates bounds [{}, {}]",
                var.name,
                var.lo,
                var.hi.unwrap_or(u64::MAX)
            )));
        }
        values[i] = rounded;
    }
    for sum in &model.sums {
        let got: i64 = sum.vars.iter().map(|&v| values[v]).sum();
        if got != sum.total as i64 {
            return Err(Error::Infeasible(format!(
                "constraint '{}' sums to {got}, expected {}",
                sum.name, sum.total
            )));
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_parser_reads_pairs_and_skips_comments() {
        let text = "# objective 42\n\\ solver notes\n\nu0_0 2\nu0_1 3.0\nz0 17.5\n";
        let map = parse_solution(text).unwrap();
        assert_eq!(map["u0_0"], 2.0);
        assert_eq!(map["u0_1"], 3.0);
        assert_eq!(map["z0"], 17.5);
    }

    #[test]
    fn solution_parser_rejects_malformed_lines() {
        assert!(parse_solution("u0_0\n").is_err());
        assert!(parse_solution("u0_0 two\n").is_err());
        assert!(parse_solution("u0_0 1 extra\n").is_err());
    }
}
