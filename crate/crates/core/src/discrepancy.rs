//! Conditional Stein discrepancy E[N_Y f(X, Y)], the identity
//! E[N_Y f_h] = E_joint[h] − E_model[h], and TV / Wasserstein bounds obtained
//! by sweeping h-dictionaries through the solver.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equation::{solve_conditional, BivariateSource};
use crate::error::{Result, SteinError};
use crate::measures::{ConditionalModel, JointTable, OrdF64, SampleSet};
use crate::numeric::pairwise_sum;
use crate::operators::{conditional_apply, BivariateTestFunction};

/// Seed for the random parts of the dictionaries when none is given.
pub const DEFAULT_DICTIONARY_SEED: u64 = 0x5EED_2024;

/// Tolerance on the y-marginal match required by the identity.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Joint law under test: an exact table or a sample.
#[derive(Debug, Clone, Copy)]
pub enum Observed<'a> {
    Exact(&'a JointTable),
    Empirical(&'a SampleSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Tv,
    W,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleCount {
    Exact,
    Samples(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionValue {
    pub label: String,
    pub value: f64,
    /// Present iff the value is a Monte Carlo estimate.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub per_function: Vec<FunctionValue>,
    /// max |value| over `per_function`.
    pub sup_value: f64,
    pub bound_kind: BoundKind,
    pub n_samples: SampleCount,
    pub seed: u64,
    /// True when the dictionary under-approximates the supremum it stands for.
    pub lower_estimate: bool,
}

impl DiscrepancyReport {
    fn new(per_function: Vec<FunctionValue>, kind: BoundKind, n: SampleCount, seed: u64, lower: bool) -> Self {
        let sup_value = per_function.iter().map(|v| v.value.abs()).fold(0.0, f64::max);
        Self {
            per_function,
            sup_value,
            bound_kind: kind,
            n_samples: n,
            seed,
            lower_estimate: lower,
        }
    }

    /// Entry attaining `sup_value`.
    pub fn argmax(&self) -> Option<&FunctionValue> {
        self.per_function
            .iter()
            .max_by(|a, b| a.value.abs().total_cmp(&b.value.abs()))
    }
}

/// Sizes and seed of the dictionaries swept by [`tv_bound`] and [`w_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryOptions {
    pub seed: u64,
    pub random_subsets: usize,
    pub random_ramps: usize,
    /// Anchors per axis for the distance functions.
    pub anchor_grid: usize,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_DICTIONARY_SEED,
            random_subsets: 256,
            random_ramps: 32,
            anchor_grid: 5,
        }
    }
}

fn positive_columns_in_model(joint: &JointTable, model: &ConditionalModel) -> Result<()> {
    let col = joint.y_marginal();
    for (&y, &m) in joint.y_grid().iter().zip(&col) {
        if m > 0.0 && model.index_of(y).is_none() {
            return Err(SteinError::EssentialRange(y));
        }
    }
    Ok(())
}

/// Σ_{x,y} mass(x, y)·N_y f(x, y). Zero-mass cells are skipped, so the table
/// may carry y-grid entries outside the model as long as they are empty.
pub fn exact_stein(joint: &JointTable, model: &ConditionalModel, f: &BivariateTestFunction) -> Result<f64> {
    positive_columns_in_model(joint, model)?;
    let terms = joint
        .entries()
        .par_iter()
        .map(|&(x, y, m)| conditional_apply(model, f, x, y).map(|v| m * v))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&terms))
}

fn check_sample_range(samples: &SampleSet, model: &ConditionalModel) -> Result<()> {
    let bad: Vec<usize> = samples
        .pairs()
        .iter()
        .enumerate()
        .filter(|(_, (_, y))| model.index_of(*y).is_none())
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(SteinError::SamplesOutsideRange {
            count: bad.len(),
            first: bad.into_iter().take(10).collect(),
        })
    }
}

/// Distinct sample points with their multiplicities, in sorted order.
fn aggregate(samples: &SampleSet) -> Vec<(f64, f64, usize)> {
    let mut counts: BTreeMap<(OrdF64, OrdF64), usize> = BTreeMap::new();
    for &(x, y) in samples.pairs() {
        *counts.entry((OrdF64(x), OrdF64(y))).or_default() += 1;
    }
    counts.into_iter().map(|((x, y), c)| (x.0, y.0, c)).collect()
}

fn mean_and_se(points: &[(f64, f64, usize)], values: &[f64], n: usize) -> (f64, f64) {
    let nf = n as f64;
    let sum: Vec<f64> = points.iter().zip(values).map(|(p, v)| p.2 as f64 * v).collect();
    let mean = pairwise_sum(&sum) / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = points
        .iter()
        .zip(values)
        .map(|(p, v)| p.2 as f64 * (v - mean) * (v - mean))
        .collect();
    let var = pairwise_sum(&sq) / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// (1/n)·Σ N_{y_i} f(x_i, y_i) and its standard error s/√n (0 for n = 1).
pub fn empirical_stein(samples: &SampleSet, model: &ConditionalModel, f: &BivariateTestFunction) -> Result<(f64, f64)> {
    check_sample_range(samples, model)?;
    let points = aggregate(samples);
    let values = points
        .par_iter()
        .map(|&(x, y, _)| conditional_apply(model, f, x, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_se(&points, &values, samples.len()))
}

fn check_marginal(joint: &JointTable, model: &ConditionalModel) -> Result<()> {
    positive_columns_in_model(joint, model)?;
    let col = joint.y_marginal();
    for (&y, &w) in model.y_values().iter().zip(model.y_weights().weights()) {
        let got = joint
            .y_grid()
            .iter()
            .position(|&v| v == y)
            .map_or(0.0, |j| col[j]);
        if (got - w).abs() > MARGINAL_TOL {
            return Err(SteinError::MarginalMismatch { y, joint: got, model: w });
        }
    }
    Ok(())
}

/// E_model[h] over the model's own law (quadrature for continuous families).
fn model_expect(model: &ConditionalModel, h: &BivariateSource) -> Result<f64> {
    model.expect(|x, y| h.eval(x, y), |y| h.breaks_at(y))
}

/// (lhs, rhs) with lhs = exact_stein(joint, model, f_h) and
/// rhs = E_joint[h] − E_model[h].
///
/// The identity needs the joint's y-marginal to equal the model's μ_Y;
/// otherwise `MarginalMismatch` is returned.
pub fn stein_identity_check(joint: &JointTable, model: &ConditionalModel, h: &BivariateSource) -> Result<(f64, f64)> {
    check_marginal(joint, model)?;
    let f = solve_conditional(model, h)?;
    let lhs = exact_stein(joint, model, &f)?;
    let rhs = joint.expect(|x, y| h.eval(x, y)) - model_expect(model, h)?;
    Ok((lhs, rhs))
}

/// Observed law reduced to distinct points.
enum Prepared {
    Exact(Vec<(f64, f64, f64)>),
    Empirical(Vec<(f64, f64, usize)>, usize),
}

fn evaluate(prepared: &Prepared, model: &ConditionalModel, h: &BivariateSource) -> Result<FunctionValue> {
    let f = solve_conditional(model, h)?;
    let (value, std_error) = match prepared {
        Prepared::Exact(entries) => {
            let terms = entries
                .iter()
                .map(|&(x, y, m)| conditional_apply(model, &f, x, y).map(|v| m * v))
                .collect::<Result<Vec<_>>>()?;
            (pairwise_sum(&terms), None)
        }
        Prepared::Empirical(points, n) => {
            let values = points
                .iter()
                .map(|&(x, y, _)| conditional_apply(model, &f, x, y))
                .collect::<Result<Vec<_>>>()?;
            let (v, se) = mean_and_se(points, &values, *n);
            (v, Some(se))
        }
    };
    Ok(FunctionValue {
        label: h.label().to_string(),
        value,
        std_error,
    })
}

/// Stein discrepancy E[N_Y f_h] for each h of a dictionary.
pub fn sweep(
    input: Observed<'_>,
    model: &ConditionalModel,
    dictionary: &[BivariateSource],
    kind: BoundKind,
    seed: u64,
) -> Result<DiscrepancyReport> {
    let (prepared, n) = match input {
        Observed::Exact(joint) => {
            positive_columns_in_model(joint, model)?;
            (Prepared::Exact(joint.entries()), SampleCount::Exact)
        }
        Observed::Empirical(s) => {
            check_sample_range(s, model)?;
            (Prepared::Empirical(aggregate(s), s.len()), SampleCount::Samples(s.len()))
        }
    };
    let values = dictionary
        .par_iter()
        .map(|h| evaluate(&prepared, model, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscrepancyReport::new(values, kind, n, seed, kind == BoundKind::W))
}

/// Observed cells with their mass (empirical frequency for samples).
fn observed_cells(input: Observed<'_>) -> Vec<(f64, f64, f64)> {
    match input {
        Observed::Exact(joint) => joint.entries(),
        Observed::Empirical(samples) => {
            let n = samples.len() as f64;
            aggregate(samples)
                .into_iter()
                .map(|(x, y, c)| (x, y, c as f64 / n))
                .collect()
        }
    }
}

/// Atoms of the model, when every family is finite-discrete.
fn model_cells(model: &ConditionalModel) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (&y, fam) in model.y_values().iter().zip(model.families()) {
        if let Some(grid) = fam.support_grid() {
            if fam.is_finite_discrete() {
                out.extend(grid.into_iter().map(|x| (x, y)));
            }
        }
    }
    out
}

/// TV dictionary: h* = 𝟙{observed mass > model mass} followed by seeded
/// random-subset indicators over the observed and model atoms.
pub fn tv_dictionary(input: Observed<'_>, model: &ConditionalModel, opts: &DictionaryOptions) -> Vec<BivariateSource> {
    let observed = observed_cells(input);
    let optimal: Vec<(f64, f64)> = observed
        .iter()
        .filter(|&&(x, y, m)| m > model.point_mass(x, y))
        .map(|&(x, y, _)| (x, y))
        .collect();
    let mut cells: Vec<(f64, f64)> = observed.iter().map(|&(x, y, _)| (x, y)).chain(model_cells(model)).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cells.dedup();

    let mut out = vec![BivariateSource::point_set("tv-optimal", optimal)];
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    for k in 0..opts.random_subsets {
        let subset: Vec<(f64, f64)> = cells.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        out.push(BivariateSource::point_set(format!("subset-{k}"), subset));
    }
    out
}

/// Lipschitz-1 dictionary over the bounding box of `points`: ±x, ±y,
/// distances to an anchor grid, and seeded unit-direction ramps.
pub fn w_dictionary(points: &[(f64, f64)], opts: &DictionaryOptions) -> Vec<BivariateSource> {
    let mut out = vec![
        BivariateSource::projection_x(1.0),
        BivariateSource::projection_x(-1.0),
        BivariateSource::projection_y(1.0),
        BivariateSource::projection_y(-1.0),
    ];
    if points.is_empty() {
        return out;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let along = |lo: f64, hi: f64, i: usize, n: usize| {
        if n < 2 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let n = opts.anchor_grid;
    for i in 0..n {
        for j in 0..n {
            out.push(BivariateSource::distance_to(along(x0, x1, i, n), along(y0, y1, j, n)));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_ramps {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (ux, uy) = (theta.cos(), theta.sin());
        let px = x0 + (x1 - x0) * rng.random::<f64>();
        let py = y0 + (y1 - y0) * rng.random::<f64>();
        out.push(BivariateSource::ramp(ux, uy, -(ux * px + uy * py)));
    }
    out
}

/// Points spanning observed cells and the model (atoms, or means for
/// continuous families).
fn span_points(input: Observed<'_>, model: &ConditionalModel) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = observed_cells(input).iter().map(|&(x, y, _)| (x, y)).collect();
    for (&y, fam) in model.y_values().iter().zip(model.families()) {
        if fam.is_finite_discrete() {
            pts.extend(fam.support_grid().unwrap_or_default().into_iter().map(|x| (x, y)));
        } else {
            pts.push((fam.mean(), y));
        }
    }
    pts
}

pub fn tv_bound(input: Observed<'_>, model: &ConditionalModel) -> Result<DiscrepancyReport> {
    tv_bound_with(input, model, &DictionaryOptions::default())
}

/// TV side of the bound. In exact mode the first entry, h*, attains
/// d_TV(joint, model) when the y-marginals agree.
pub fn tv_bound_with(input: Observed<'_>, model: &ConditionalModel, opts: &DictionaryOptions) -> Result<DiscrepancyReport> {
    if let Observed::Exact(joint) = input {
        positive_columns_in_model(joint, model)?;
    }
    let dict = tv_dictionary(input, model, opts);
    sweep(input, model, &dict, BoundKind::Tv, opts.seed)
}

pub fn w_bound(input: Observed<'_>, model: &ConditionalModel) -> Result<DiscrepancyReport> {
    w_bound_with(input, model, &DictionaryOptions::default())
}

/// Wasserstein side of the bound, a lower estimate of the Lipschitz-1 supremum.
pub fn w_bound_with(input: Observed<'_>, model: &ConditionalModel, opts: &DictionaryOptions) -> Result<DiscrepancyReport> {
    if let Observed::Exact(joint) = input {
        positive_columns_in_model(joint, model)?;
    }
    let dict = w_dictionary(&span_points(input, model), opts);
    sweep(input, model, &dict, BoundKind::W, opts.seed)
}

/// max_h |E_a[h] − E_b[h]| over a dictionary, computed directly from two tables.
pub fn dictionary_gap(a: &JointTable, b: &JointTable, dictionary: &[BivariateSource]) -> f64 {
    dictionary
        .iter()
        .map(|h| (a.expect(|x, y| h.eval(x, y)) - b.expect(|x, y| h.eval(x, y))).abs())
        .fold(0.0, f64::max)
}
