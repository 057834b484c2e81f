//! Brute-force ground truth on finite tables: total variation, Wasserstein
//! distance by optimal transport, the finite characterization, and per-slice
//! conditional expectations.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use crate::discrepancy::{exact_stein, MARGINAL_TOL};
use crate::error::{Result, SteinError};
use crate::measures::{ConditionalModel, JointTable, TargetFamily};
use crate::numeric::pairwise_sum;
use crate::operators::{apply, BivariateTestFunction, TestFunction};

/// Largest combined positive-mass support accepted by [`wasserstein_exact`].
pub const SUPPORT_CAP: usize = 400;

const LP_MASS_SCALE: f64 = 1e6;
const LP_COST_SCALE: f64 = 1e3;

/// Equality tolerance for tables.
pub const TABLE_TOL: f64 = 1e-10;

/// ½·Σ|a − b| over the union grid.
pub fn tv_exact(a: &JointTable, b: &JointTable) -> f64 {
    let (a, b) = JointTable::common_grid(a, b);
    let diffs: Vec<f64> = a
        .mass()
        .iter()
        .zip(b.mass())
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| (p - q).abs()))
        .collect();
    (0.5 * pairwise_sum(&diffs)).min(1.0)
}

/// Optimal transport cost between two tables with Euclidean ground cost,
/// solved as a dense linear program.
pub fn wasserstein_exact(a: &JointTable, b: &JointTable) -> Result<f64> {
    let src = a.entries();
    let dst = b.entries();
    let combined = src.len() + dst.len();
    if combined > SUPPORT_CAP {
        return Err(SteinError::Size(combined, SUPPORT_CAP));
    }
    if src.is_empty() || dst.is_empty() {
        return Err(SteinError::Solver("empty table".into()));
    }
    let cost = |a: &(f64, f64, f64), b: &(f64, f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let max_cost = src
        .iter()
        .flat_map(|a| dst.iter().map(move |b| cost(a, b)))
        .fold(0.0, f64::max);
    if max_cost == 0.0 {
        return Ok(0.0);
    }
    // the simplex tolerances are absolute (1e-8); scaling masses and costs up
    // makes them negligible relative to the optimum
    let (mass_scale, cost_scale) = (LP_MASS_SCALE, LP_COST_SCALE / max_cost);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(src.len());
    for a in &src {
        let row: Vec<_> = dst
            .iter()
            .map(|b| lp.add_var(cost(a, b) * cost_scale, (0.0, f64::INFINITY)))
            .collect();
        vars.push(row);
    }
    for (i, &(_, _, m)) in src.iter().enumerate() {
        let mut e = LinearExpr::empty();
        for v in &vars[i] {
            e.add(*v, 1.0);
        }
        lp.add_constraint(e, ComparisonOp::Eq, m * mass_scale);
    }
    // the last demand row is implied by the others; dropping it keeps the
    // program feasible when the totals differ by rounding
    for (j, &(_, _, m)) in dst.iter().enumerate().take(dst.len() - 1) {
        let mut e = LinearExpr::empty();
        for row in &vars {
            e.add(row[j], 1.0);
        }
        lp.add_constraint(e, ComparisonOp::Eq, m * mass_scale);
    }
    let sol = lp.solve().map_err(|e| SteinError::Solver(e.to_string()))?;
    Ok((sol.objective() / (mass_scale * cost_scale)).max(0.0))
}

fn finite_law_at(model: &ConditionalModel, i: usize) -> Result<&crate::measures::FiniteLaw> {
    match &model.families()[i] {
        TargetFamily::FiniteDiscrete(law) => Ok(law),
        other => Err(SteinError::GridMismatch(format!(
            "characterization needs finite-discrete families, found {other} at y = {}",
            model.y_values()[i]
        ))),
    }
}

/// True iff `joint` equals the model's joint law, decided through the Stein
/// operator: every indicator 𝟙{x = s_j}·𝟙{y = y_i} with s_j above the left
/// endpoint of ν_{y_i} must have zero discrepancy (within 1e-10), and the
/// y-marginal must agree with μ_Y.
pub fn characterize_finite(joint: &JointTable, model: &ConditionalModel) -> Result<bool> {
    for i in 0..model.families().len() {
        finite_law_at(model, i)?;
    }
    let col = joint.y_marginal();
    for (j, &y) in joint.y_grid().iter().enumerate() {
        if col[j] > 0.0 && model.index_of(y).is_none() {
            return Err(SteinError::GridMismatch(format!("joint column y = {y} is not in the model")));
        }
    }
    // mass where ν_y has none cannot be reached by the operator
    for (x, y, _) in joint.entries() {
        let i = model.index_of(y).expect("checked above");
        if finite_law_at(model, i)?.index_of(x).is_none() {
            return Ok(false);
        }
    }
    for (i, &y) in model.y_values().iter().enumerate() {
        let got = joint.y_grid().iter().position(|&v| v == y).map_or(0.0, |j| col[j]);
        if (got - model.y_weights().weights()[i]).abs() > MARGINAL_TOL {
            return Ok(false);
        }
    }
    for (i, &y) in model.y_values().iter().enumerate() {
        let law = finite_law_at(model, i)?;
        for &s in &law.support()[1..] {
            let f = BivariateTestFunction::single_section(y, TestFunction::indicator_at(s));
            if exact_stein(joint, model, &f)?.abs() > TABLE_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Per-slice Stein expectation Σ_x P(x | y)·N_y f(x, y) for every y with
/// positive column mass.
pub fn conditional_expectation_check(
    joint: &JointTable,
    model: &ConditionalModel,
    f: &BivariateTestFunction,
) -> Result<Vec<(f64, f64)>> {
    let col = joint.y_marginal();
    let mut out = Vec::new();
    for (j, &y) in joint.y_grid().iter().enumerate() {
        if col[j] <= 0.0 {
            continue;
        }
        let family = model
            .family_at(y)
            .map_err(|_| SteinError::GridMismatch(format!("joint column y = {y} is not in the model")))?;
        let section = f.section(y);
        let mut terms = Vec::new();
        for (i, &x) in joint.x_grid().iter().enumerate() {
            let m = joint.mass()[i][j];
            if m > 0.0 {
                terms.push(m / col[j] * apply(family, &section, x)?);
            }
        }
        out.push((y, pairwise_sum(&terms)));
    }
    Ok(out)
}
