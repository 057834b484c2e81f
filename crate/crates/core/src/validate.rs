//! Self-check suites run by `condstein validate`: seeded random cases pushed
//! through the library and compared with the oracles.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::discrepancy::{stein_identity_check, tv_bound, tv_dictionary, w_bound, w_dictionary, DictionaryOptions, Observed};
use crate::error::Result;
use crate::measures::{joint_table, joint_table_with, ConditionalModel, Discretization, FiniteLaw, JointTable, TargetFamily};
use crate::oracle::{characterize_finite, tv_exact, wasserstein_exact, TABLE_TOL};
use crate::sim::{perturb, sample_independent, Perturbation, Seed};

pub const IDENTITY_TOL: f64 = 1e-8;
pub const LP_TOL: f64 = 1e-8;
/// Monte Carlo acceptance band, in standard errors.
pub const SE_BAND: f64 = 4.0;

/// Support shapes (x points, y values) used by the random cases.
pub const SHAPES: [(usize, usize); 3] = [(3, 2), (5, 3), (8, 4)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Identity,
    Characterization,
    Bounds,
    Independence,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Identity, Suite::Characterization, Suite::Bounds, Suite::Independence];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identity => "identity",
            Suite::Characterization => "characterization",
            Suite::Bounds => "bounds",
            Suite::Independence => "independence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation seen, in the suite's own unit.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub passed: bool,
}

fn random_law(rng: &mut ChaCha20Rng, support: Vec<f64>, allow_zero: bool) -> FiniteLaw {
    let mut w: Vec<f64> = support
        .iter()
        .map(|_| {
            if allow_zero && rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    FiniteLaw::new(support, w.into_iter().map(|v| v / total).collect()).expect("normalized weights")
}

/// Finite model on x ∈ {0..nx−1}, y ∈ {0..ny−1}; each ν_y lives on a random
/// subset of at least two x points.
pub fn random_model(rng: &mut ChaCha20Rng, nx: usize, ny: usize) -> ConditionalModel {
    let ys: Vec<f64> = (0..ny).map(|j| j as f64).collect();
    let mu = random_law(rng, ys, false);
    let families = (0..ny)
        .map(|_| {
            let mut xs: Vec<usize> = (0..nx).collect();
            xs.shuffle(rng);
            let k = rng.random_range(2.min(nx)..=nx);
            let mut pick: Vec<f64> = xs[..k].iter().map(|&i| i as f64).collect();
            pick.sort_by(f64::total_cmp);
            TargetFamily::finite(random_law(rng, pick, false))
        })
        .collect();
    ConditionalModel::new(mu, families).expect("valid random model")
}

/// Joint with the model's y-marginal and random conditionals q_y supported
/// inside the support of ν_y.
pub fn random_joint_for(rng: &mut ChaCha20Rng, model: &ConditionalModel) -> JointTable {
    let mut entries = Vec::new();
    for ((&y, &w), fam) in model.y_values().iter().zip(model.y_weights().weights()).zip(model.families()) {
        let support = fam.support_grid().expect("finite family");
        let q = random_law(rng, support, true);
        for (&x, &p) in q.support().iter().zip(q.weights()) {
            entries.push((x, y, w * p));
        }
    }
    JointTable::from_entries(entries).expect("valid random joint")
}

/// Random (joint, model) pair number `index` of the identity and bounds suites.
pub fn identity_case(seed: u64, index: usize) -> (JointTable, ConditionalModel) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (nx, ny) = SHAPES[index % SHAPES.len()];
    let model = random_model(&mut rng, nx, ny);
    let joint = random_joint_for(&mut rng, &model);
    (joint, model)
}

/// Characterization case: the joint is either the model's own table or one of
/// several perturbations of it. Returns the ground truth from entrywise
/// comparison.
pub fn characterization_case(seed: u64, shape: (usize, usize), index: usize) -> (JointTable, ConditionalModel, bool) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ ((shape.0 as u64) << 32 | shape.1 as u64));
    rng.set_stream(index as u64);
    let model = random_model(&mut rng, shape.0, shape.1);
    let table = joint_table(&model).expect("finite model");
    let joint = match index % 5 {
        0 => table.clone(),
        1 => {
            // move mass inside one column
            let entries = table.entries();
            let (x, y, m) = entries[rng.random_range(0..entries.len())];
            let others: Vec<_> = entries.iter().filter(|e| e.1 == y && e.0 != x).collect();
            if others.is_empty() {
                table.clone()
            } else {
                let (x2, _, _) = *others[rng.random_range(0..others.len())];
                let d = m * rng.random_range(0.01..0.5);
                JointTable::from_entries(entries.iter().map(|&(a, b, w)| {
                    if a == x && b == y {
                        (a, b, w - d)
                    } else if a == x2 && b == y {
                        (a, b, w + d)
                    } else {
                        (a, b, w)
                    }
                }))
                .expect("valid")
            }
        }
        2 => {
            let (ya, yb) = (0.0, (shape.1 - 1) as f64);
            joint_table(&perturb(&model, &Perturbation::SwapConditionals(ya, yb)).expect("present")).expect("finite")
        }
        3 => random_joint_for(&mut rng, &model),
        _ => {
            // swap mass across columns at a shared x, x-marginal intact
            let entries = table.entries();
            let mut out = table.clone();
            'search: for &(x, y0, m0) in &entries {
                for &(x1, y1, m1) in &entries {
                    if x1 == x && y1 != y0 {
                        let d = m0.min(m1) * 0.3;
                        out = JointTable::from_entries(entries.iter().map(|&(a, b, w)| {
                            if a == x && b == y0 {
                                (a, b, w - d)
                            } else if a == x && b == y1 {
                                (a, b, w + d)
                            } else {
                                (a, b, w)
                            }
                        }))
                        .expect("valid");
                        break 'search;
                    }
                }
            }
            out
        }
    };
    let (a, b) = JointTable::common_grid(&joint, &table);
    let equal = a
        .mass()
        .iter()
        .zip(b.mass())
        .all(|(r, s)| r.iter().zip(s).all(|(p, q)| (p - q).abs() <= TABLE_TOL));
    (joint, model, equal)
}

fn finish(suite: Suite, cases: usize, failures: usize, worst: f64, tolerance: f64, start: Instant, passed: bool) -> SuiteReport {
    SuiteReport {
        suite,
        cases,
        failures,
        worst,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
        passed,
    }
}

fn identity_suite(seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let opts = DictionaryOptions::default();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let cases = 50;
    for i in 0..cases {
        let (joint, model) = identity_case(seed, i);
        let pts: Vec<(f64, f64)> = joint.entries().iter().map(|e| (e.0, e.1)).collect();
        let dict = tv_dictionary(Observed::Exact(&joint), &model, &opts)
            .into_iter()
            .chain(w_dictionary(&pts, &opts));
        let mut bad = false;
        for h in dict {
            let (l, r) = stein_identity_check(&joint, &model, &h)?;
            worst = worst.max((l - r).abs());
            bad |= (l - r).abs() > IDENTITY_TOL;
        }
        failures += bad as usize;
    }
    Ok(finish(Suite::Identity, cases, failures, worst, IDENTITY_TOL, start, failures == 0))
}

fn characterization_suite(seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut failures = 0;
    let mut cases = 0;
    for shape in SHAPES {
        for i in 0..100 {
            let (joint, model, truth) = characterization_case(seed, shape, i);
            if characterize_finite(&joint, &model)? != truth {
                failures += 1;
            }
            cases += 1;
        }
    }
    Ok(finish(Suite::Characterization, cases, failures, failures as f64, 0.0, start, failures == 0))
}

fn bounds_suite(seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut cases = 0;
    for i in 0..50 {
        let (joint, model) = identity_case(seed, i);
        let table = joint_table(&model)?;
        let tv = tv_bound(Observed::Exact(&joint), &model)?.sup_value;
        let w = w_bound(Observed::Exact(&joint), &model)?.sup_value;
        let tv_gap = (tv - tv_exact(&joint, &table)).abs();
        let w_excess = w - wasserstein_exact(&joint, &table)?;
        worst = worst.max(tv_gap).max(w_excess);
        failures += (tv_gap > IDENTITY_TOL || w_excess > LP_TOL) as usize;
        cases += 1;
    }
    // pure translations of a Gaussian model, tabulated by mean-preserving cells
    let model = ConditionalModel::new(
        FiniteLaw::new(vec![0.0, 1.0], vec![0.4, 0.6])?,
        vec![TargetFamily::gaussian(0.0, 1.0)?, TargetFamily::gaussian(2.0, 1.0)?],
    )?;
    let how = Discretization::Quantized { cells: 60 };
    let base = joint_table_with(&model, &how)?;
    for eps in [0.1, 0.5, 1.0] {
        let joint = joint_table_with(&perturb(&model, &Perturbation::MeanShift(eps))?, &how)?;
        let w = w_bound(Observed::Exact(&joint), &model)?.sup_value;
        let oracle = wasserstein_exact(&joint, &base)?;
        let short = (0.99 * eps - w).max(0.0);
        worst = worst.max(short).max(w - oracle);
        failures += (short > 0.0 || w > oracle + LP_TOL) as usize;
        cases += 1;
    }
    Ok(finish(Suite::Bounds, cases, failures, worst, IDENTITY_TOL, start, failures == 0))
}

/// Constant-family model against the independent sampler; passes when at
/// least 7 of 8 seeds fall within the standard-error band.
fn independence_suite(seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let x_law = TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3])?);
    let y_law = FiniteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5])?;
    let model = ConditionalModel::independent(x_law.clone(), y_law.clone())?;
    let mut outside = 0;
    let mut worst: f64 = 0.0;
    for k in 0..8u64 {
        let s = sample_independent(&x_law, &y_law, 100_000, Seed(seed.wrapping_add(k)))?;
        let rep = tv_bound(Observed::Empirical(&s), &model)?;
        let se = rep.argmax().and_then(|a| a.std_error).unwrap_or(0.0);
        let ratio = if se > 0.0 { rep.sup_value / se } else { f64::INFINITY };
        worst = worst.max(ratio);
        outside += (ratio > SE_BAND) as usize;
    }
    Ok(finish(Suite::Independence, 8, outside, worst, SE_BAND, start, outside <= 1))
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Identity => identity_suite(seed),
        Suite::Characterization => characterization_suite(seed),
        Suite::Bounds => bounds_suite(seed),
        Suite::Independence => independence_suite(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_joint_shares_y_marginal() {
        let (joint, model) = identity_case(3, 2);
        let col = joint.y_marginal();
        for (j, &w) in model.y_weights().weights().iter().enumerate() {
            assert!((col[j] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn characterization_cases_cover_both_outcomes() {
        let truths: Vec<bool> = (0..10).map(|i| characterization_case(1, (5, 3), i).2).collect();
        assert!(truths.iter().any(|&t| t) && truths.iter().any(|&t| !t));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
    }
}
