//! Probability-law data model.
//!
//! Finite laws, the per-y target families, conditional models built from a
//! y-marginal and one family per y, exact joint tables, observed samples, and
//! the conversions between them (mixture, joint construction, disintegration,
//! y-binning).
//!
//! All types validate on construction and are immutable afterwards.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SteinError};
use crate::numeric::{
    as_count, gamma_cdf, gamma_ln_pdf, gamma_quantile, gamma_sf, pairwise_sum, poisson_ln_pmf,
    std_normal_cdf, std_normal_pdf, MASS_TOL,
};
use crate::quadrature::{integrate, ABS_TOL};

/// Standard deviations covered by the Gaussian integration window.
pub const GAUSSIAN_WINDOW_SD: f64 = 12.0;
/// Tail probability cut on each side of the Gamma integration window.
pub const GAMMA_TAIL: f64 = 1e-14;
/// Relative pmf level (versus the mode) at which the Poisson support grid stops.
pub const POISSON_GRID_CUT: f64 = 1e-16;

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn find_exact(sorted: &[f64], x: f64) -> Option<usize> {
    sorted.binary_search_by(|p| p.total_cmp(&x)).ok()
}

/// Probability law with finite support on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub struct FiniteLaw {
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawLaw {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawLaw> for FiniteLaw {
    type Error = SteinError;
    fn try_from(raw: RawLaw) -> Result<Self> {
        FiniteLaw::new(raw.support, raw.weights)
    }
}

impl From<FiniteLaw> for RawLaw {
    fn from(law: FiniteLaw) -> Self {
        RawLaw {
            support: law.support,
            weights: law.weights,
        }
    }
}

impl FiniteLaw {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(invalid("finite law", "empty support"));
        }
        if support.len() != weights.len() {
            return Err(invalid(
                "finite law",
                format!("{} support points but {} weights", support.len(), weights.len()),
            ));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(invalid("finite law", "support contains a non-finite value"));
        }
        if !strictly_increasing(&support) {
            return Err(invalid("finite law", "support must be strictly increasing"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid("finite law", format!("weight {w} is not a probability")));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(
                "finite law",
                format!("weights sum to {total}, not 1 within {MASS_TOL:e}"),
            ));
        }
        Ok(Self { support, weights })
    }

    pub fn point(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let n = points.len().max(1) as f64;
        let w = vec![1.0 / n; points.len()];
        Self::new(points, w)
    }

    /// Builds a law from unsorted `(point, weight)` pairs, merging exact duplicates.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<OrdF64, Vec<f64>> = BTreeMap::new();
        for (x, w) in pairs {
            acc.entry(OrdF64(x)).or_default().push(w);
        }
        let (support, weights) = acc
            .into_iter()
            .map(|(k, ws)| (k.0, pairwise_sum(&ws)))
            .unzip();
        Self::new(support, weights)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        find_exact(&self.support, x)
    }

    /// ν({x}); zero off the support.
    pub fn mass_at(&self, x: f64) -> f64 {
        self.index_of(x).map_or(0.0, |i| self.weights[i])
    }

    pub fn has_full_support(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    /// Same law with zero-weight points removed.
    pub fn trimmed(&self) -> Self {
        let (support, weights) = self
            .support
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| (x, w))
            .unzip();
        Self { support, weights }
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let terms: Vec<f64> = self
            .support
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| if w == 0.0 { 0.0 } else { w * g(x) })
            .collect();
        pairwise_sum(&terms)
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    /// (1−ε)·self + ε·other on the union support.
    pub fn mix(&self, other: &FiniteLaw, eps: f64) -> Result<Self> {
        let pairs = self
            .support
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (x, (1.0 - eps) * w))
            .chain(other.support.iter().zip(&other.weights).map(|(&x, &w)| (x, eps * w)));
        Self::from_pairs(pairs)
    }
}

/// Total order wrapper used for exact-valued float keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Target law ν_y for a single value of the auxiliary variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "params")]
pub enum TargetFamily {
    Gaussian { mean: f64, variance: f64 },
    Poisson { lambda: f64 },
    Gamma { shape: f64, rate: f64 },
    FiniteDiscrete(FiniteLaw),
}

impl fmt::Display for TargetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { mean, variance } => write!(f, "Gaussian(mean={mean}, variance={variance})"),
            Self::Poisson { lambda } => write!(f, "Poisson(lambda={lambda})"),
            Self::Gamma { shape, rate } => write!(f, "Gamma(shape={shape}, rate={rate})"),
            Self::FiniteDiscrete(law) => write!(f, "FiniteDiscrete({} points)", law.len()),
        }
    }
}

impl TargetFamily {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        let fam = Self::Gaussian { mean, variance };
        fam.validate()?;
        Ok(fam)
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        let fam = Self::Poisson { lambda };
        fam.validate()?;
        Ok(fam)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let fam = Self::Gamma { shape, rate };
        fam.validate()?;
        Ok(fam)
    }

    /// Finite-support family; zero-mass points are removed.
    pub fn finite(law: FiniteLaw) -> Self {
        Self::FiniteDiscrete(law.trimmed())
    }

    /// Checks parameter constraints; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid("target family", format!("{name} must be a finite positive number, got {v}")))
            }
        };
        match self {
            Self::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    return Err(invalid("target family", format!("mean must be finite, got {mean}")));
                }
                positive("variance", *variance)
            }
            Self::Poisson { lambda } => positive("lambda", *lambda),
            Self::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            Self::FiniteDiscrete(law) => {
                if law.has_full_support() {
                    Ok(())
                } else {
                    Err(invalid("target family", "FiniteDiscrete law has zero-mass points"))
                }
            }
        }
    }

    pub fn is_finite_discrete(&self) -> bool {
        matches!(self, Self::FiniteDiscrete(_))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Poisson { lambda } => *lambda,
            Self::Gamma { shape, rate } => shape / rate,
            Self::FiniteDiscrete(law) => law.mean(),
        }
    }

    /// Whether `x` lies in the domain of the family's Stein operator.
    pub fn in_domain(&self, x: f64) -> bool {
        match self {
            Self::Gaussian { .. } => x.is_finite(),
            Self::Poisson { .. } => as_count(x).is_some(),
            Self::Gamma { .. } => x.is_finite() && x > 0.0,
            Self::FiniteDiscrete(law) => law.index_of(x).is_some(),
        }
    }

    pub(crate) fn domain_error(&self, x: f64) -> SteinError {
        SteinError::Domain {
            family: self.to_string(),
            x,
        }
    }

    /// ν({x}): atom mass, zero for continuous families.
    pub fn point_mass(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { .. } | Self::Gamma { .. } => 0.0,
            Self::Poisson { lambda } => as_count(x).map_or(0.0, |k| poisson_ln_pmf(*lambda, k).exp()),
            Self::FiniteDiscrete(law) => law.mass_at(x),
        }
    }

    /// Integration window `[lo, hi]` for continuous families.
    pub fn window(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                (mean - GAUSSIAN_WINDOW_SD * sd, mean + GAUSSIAN_WINDOW_SD * sd)
            }
            Self::Gamma { shape, rate } => {
                let lo = gamma_quantile(*shape, *rate, GAMMA_TAIL);
                let mut hi = gamma_quantile(*shape, *rate, 1.0 - GAMMA_TAIL);
                // extend until degree-6 growth times density is negligible
                while 7.0 * hi.ln() + gamma_ln_pdf(*shape, *rate, hi) > (1e-20f64).ln() {
                    hi *= 1.1;
                }
                (lo.max(f64::MIN_POSITIVE), hi)
            }
            Self::Poisson { .. } => {
                let k = self.poisson_grid_end();
                (0.0, k as f64)
            }
            Self::FiniteDiscrete(law) => (law.support[0], *law.support.last().unwrap()),
        }
    }

    fn poisson_mode(lambda: f64) -> u64 {
        lambda.floor() as u64
    }

    /// Last k of the Poisson support grid: pmf(k) ≥ 1e-16 · pmf(mode).
    pub(crate) fn poisson_grid_end(&self) -> u64 {
        let Self::Poisson { lambda } = self else { return 0 };
        let mode = Self::poisson_mode(*lambda);
        let cut = poisson_ln_pmf(*lambda, mode) + POISSON_GRID_CUT.ln();
        let mut k = mode;
        while poisson_ln_pmf(*lambda, k + 1) >= cut {
            k += 1;
        }
        k
    }

    /// End of the Poisson summation range used for expectations; goes further
    /// than the grid so polynomial-growth integrands lose nothing visible.
    fn poisson_sum_end(lambda: f64) -> u64 {
        let mode = Self::poisson_mode(lambda);
        let mut k = mode + 1;
        while poisson_ln_pmf(lambda, k) + 7.0 * ((k + 1) as f64).ln() > (1e-30f64).ln() {
            k += 1;
        }
        k
    }

    /// Support points used when a discrete family is checked pointwise.
    pub fn support_grid(&self) -> Option<Vec<f64>> {
        match self {
            Self::Poisson { .. } => Some((0..=self.poisson_grid_end()).map(|k| k as f64).collect()),
            Self::FiniteDiscrete(law) => Some(law.support.clone()),
            _ => None,
        }
    }

    /// E_ν[g] by exact summation (discrete) or adaptive quadrature on the
    /// truncated window (continuous). `breaks` lists jumps/kinks of `g`.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, breaks: &[f64]) -> Result<f64> {
        match self {
            Self::FiniteDiscrete(law) => Ok(law.expect(g)),
            Self::Poisson { lambda } => {
                let end = Self::poisson_sum_end(*lambda);
                let terms: Vec<f64> = (0..=end)
                    .map(|k| {
                        let p = poisson_ln_pmf(*lambda, k).exp();
                        if p == 0.0 { 0.0 } else { p * g(k as f64) }
                    })
                    .collect();
                Ok(pairwise_sum(&terms))
            }
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let zb: Vec<f64> = breaks.iter().map(|b| (b - mean) / sd).collect();
                integrate(
                    |z| std_normal_pdf(z) * g(mean + sd * z),
                    -GAUSSIAN_WINDOW_SD,
                    GAUSSIAN_WINDOW_SD,
                    &zb,
                    ABS_TOL,
                )
            }
            Self::Gamma { shape, rate } => {
                let (lo, hi) = self.window();
                let sb: Vec<f64> = breaks.iter().filter(|b| **b > 0.0).map(|b| b.ln()).collect();
                let (a, r) = (*shape, *rate);
                integrate(
                    |s| {
                        let x = s.exp();
                        let w = (gamma_ln_pdf(a, r, x) + s).exp();
                        if w == 0.0 { 0.0 } else { w * g(x) }
                    },
                    lo.ln(),
                    hi.ln(),
                    &sb,
                    ABS_TOL,
                )
            }
        }
    }

    /// Finite approximation of the family used to tabulate joints.
    pub fn discretize(&self, how: &Discretization) -> Result<FiniteLaw> {
        match (self, how) {
            (Self::FiniteDiscrete(law), _) => Ok(law.clone()),
            (_, Discretization::Exact) => Err(SteinError::MixedMode(format!(
                "{self} has no finite support; supply a truncation grid"
            ))),
            (_, Discretization::Grid(grid)) => self.discretize_on_grid(grid),
            (_, Discretization::Quantized { cells }) => self.quantize(*cells),
        }
    }

    /// cdf(x) and survival(x) as a pair, each accurate in its own tail.
    fn cdf_sf(&self, x: f64) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, variance } => {
                let z = (x - mean) / variance.sqrt();
                (std_normal_cdf(z), std_normal_cdf(-z))
            }
            Self::Gamma { shape, rate } => (gamma_cdf(*shape, *rate, x), gamma_sf(*shape, *rate, x)),
            Self::Poisson { lambda } => {
                if x < 0.0 {
                    return (0.0, 1.0);
                }
                let k = x.floor();
                // P(X ≤ k) = Q(k+1, λ)
                let upper = statrs::function::gamma::gamma_ur(k + 1.0, *lambda);
                let lower = statrs::function::gamma::gamma_lr(k + 1.0, *lambda);
                (upper, lower)
            }
            Self::FiniteDiscrete(law) => {
                let c = law.expect(|s| if s <= x { 1.0 } else { 0.0 });
                (c, 1.0 - c)
            }
        }
    }

    /// ν((a, b]) computed from whichever tail is more accurate.
    fn cell_mass(&self, a: f64, b: f64) -> f64 {
        let (ca, sa) = self.cdf_sf(a);
        let (cb, sb) = self.cdf_sf(b);
        if ca < 0.5 { (cb - ca).max(0.0) } else { (sa - sb).max(0.0) }
    }

    fn discretize_on_grid(&self, grid: &[f64]) -> Result<FiniteLaw> {
        if grid.is_empty() || !strictly_increasing(grid) {
            return Err(invalid("truncation grid", "must be nonempty and strictly increasing"));
        }
        let mut weights = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let a = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (grid[i - 1] + grid[i]) };
            let b = if i + 1 == grid.len() { f64::INFINITY } else { 0.5 * (grid[i] + grid[i + 1]) };
            weights.push(self.cell_mass(a, b));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(SteinError::MixedMode(format!(
                "grid cells capture mass {total} of {self}"
            )));
        }
        FiniteLaw::from_pairs(grid.iter().copied().zip(weights).filter(|(_, w)| *w > 0.0))
    }

    /// Mean-preserving quantization: `cells` cells over the family's
    /// quantization window, outer cells extended to the domain boundary, each
    /// carrying its mass at its conditional mean. Poisson is tabulated on its
    /// integer grid with the tail folded into the last point.
    fn quantize(&self, cells: usize) -> Result<FiniteLaw> {
        if cells < 2 {
            return Err(invalid("quantization", "need at least two cells"));
        }
        match self {
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let half = 8.0;
                let width = 2.0 * half / cells as f64;
                let mut pairs = Vec::with_capacity(cells);
                for i in 0..cells {
                    let a = if i == 0 { f64::NEG_INFINITY } else { -half + width * i as f64 };
                    let b = if i + 1 == cells { f64::INFINITY } else { -half + width * (i + 1) as f64 };
                    let mass = if a < 0.0 {
                        std_normal_cdf(b) - std_normal_cdf(a)
                    } else {
                        std_normal_cdf(-a) - std_normal_cdf(-b)
                    };
                    let first = std_normal_pdf(a) - std_normal_pdf(b);
                    pairs.push((mean + sd * (first / mass), mass));
                }
                FiniteLaw::from_pairs(pairs)
            }
            Self::Gamma { shape, rate } => {
                let lo = gamma_quantile(*shape, *rate, 1e-10);
                let hi = gamma_quantile(*shape, *rate, 1.0 - 1e-10);
                let width = (hi - lo) / cells as f64;
                let m = shape / rate;
                let mut pairs = Vec::with_capacity(cells);
                for i in 0..cells {
                    let a = if i == 0 { 0.0 } else { lo + width * i as f64 };
                    let b = if i + 1 == cells { f64::INFINITY } else { lo + width * (i + 1) as f64 };
                    let mass = self.cell_mass(a, b);
                    let shifted = Self::Gamma { shape: shape + 1.0, rate: *rate };
                    let first = m * shifted.cell_mass(a, b);
                    if mass > 0.0 {
                        pairs.push((first / mass, mass));
                    }
                }
                FiniteLaw::from_pairs(pairs)
            }
            Self::Poisson { lambda } => {
                let end = self.poisson_grid_end();
                let mut pairs: Vec<(f64, f64)> =
                    (0..end).map(|k| (k as f64, poisson_ln_pmf(*lambda, k).exp())).collect();
                let head = pairwise_sum(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
                let tail = statrs::function::gamma::gamma_lr(end as f64, *lambda);
                // P(X ≥ end) folded into the last point
                pairs.push((end as f64, tail));
                let total = head + pairs.last().unwrap().1;
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(SteinError::MixedMode(format!("Poisson tabulation lost mass {total}")));
                }
                FiniteLaw::from_pairs(pairs)
            }
            Self::FiniteDiscrete(law) => Ok(law.clone()),
        }
    }
}

/// How a non-finite family is placed on a finite support when a joint table
/// is tabulated.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Discretization {
    /// Only finite-discrete families are accepted.
    #[default]
    Exact,
    /// Shared grid; each point carries the mass of its midpoint cell, the
    /// outer cells absorbing the tails.
    Grid(Vec<f64>),
    /// Mean-preserving quantization with the given number of cells per family.
    Quantized { cells: usize },
}

/// Target conditional model: μ_Y on the essential range plus one family per y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct ConditionalModel {
    y_weights: FiniteLaw,
    families: Vec<TargetFamily>,
}

/// Serialized form of a model: `{y_values, y_weights, families}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub y_values: Vec<f64>,
    pub y_weights: Vec<f64>,
    pub families: Vec<TargetFamily>,
}

impl TryFrom<ModelSpec> for ConditionalModel {
    type Error = SteinError;
    fn try_from(spec: ModelSpec) -> Result<Self> {
        ConditionalModel::new(FiniteLaw::new(spec.y_values, spec.y_weights)?, spec.families)
    }
}

impl From<ConditionalModel> for ModelSpec {
    fn from(m: ConditionalModel) -> Self {
        ModelSpec {
            y_values: m.y_weights.support,
            y_weights: m.y_weights.weights,
            families: m.families,
        }
    }
}

impl ConditionalModel {
    pub fn new(y_weights: FiniteLaw, families: Vec<TargetFamily>) -> Result<Self> {
        if let Some(i) = y_weights.weights.iter().position(|&w| w <= 0.0) {
            return Err(invalid(
                "conditional model",
                format!("y = {} has zero weight and lies outside the essential range", y_weights.support[i]),
            ));
        }
        if families.len() != y_weights.len() {
            return Err(invalid(
                "conditional model",
                format!("{} families for {} y values", families.len(), y_weights.len()),
            ));
        }
        for (i, fam) in families.iter().enumerate() {
            fam.validate().map_err(|e| match e {
                SteinError::Invalid { reason, .. } => invalid("conditional model", format!("families[{i}]: {reason}")),
                other => other,
            })?;
        }
        Ok(Self { y_weights, families })
    }

    /// Model in which every y shares the same family (M independent of Y).
    pub fn independent(family: TargetFamily, y_law: FiniteLaw) -> Result<Self> {
        let y = y_law.trimmed();
        let families = vec![family; y.len()];
        Self::new(y, families)
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y_weights.support
    }

    pub fn y_weights(&self) -> &FiniteLaw {
        &self.y_weights
    }

    pub fn families(&self) -> &[TargetFamily] {
        &self.families
    }

    pub fn index_of(&self, y: f64) -> Option<usize> {
        self.y_weights.index_of(y)
    }

    pub fn family_at(&self, y: f64) -> Result<&TargetFamily> {
        self.index_of(y)
            .map(|i| &self.families[i])
            .ok_or(SteinError::EssentialRange(y))
    }

    pub fn is_exact(&self) -> bool {
        self.families.iter().all(TargetFamily::is_finite_discrete)
    }

    /// P_{M,Y}({(x, y)}).
    pub fn point_mass(&self, x: f64, y: f64) -> f64 {
        self.index_of(y)
            .map_or(0.0, |i| self.y_weights.weights[i] * self.families[i].point_mass(x))
    }

    /// Σ_y μ_Y(y)·E_{ν_y}[h(·, y)].
    pub fn expect<F: Fn(f64, f64) -> f64>(&self, h: F, x_breaks: impl Fn(f64) -> Vec<f64>) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.families.len());
        for (i, fam) in self.families.iter().enumerate() {
            let y = self.y_weights.support[i];
            let e = fam.expect(|x| h(x, y), &x_breaks(y))?;
            terms.push(self.y_weights.weights[i] * e);
        }
        Ok(pairwise_sum(&terms))
    }
}

/// μ_M(A) = Σ_y μ_Y(y)·ν_y(A) in exact mode.
pub fn mixture_marginal(model: &ConditionalModel) -> Result<FiniteLaw> {
    mixture_marginal_with(model, &Discretization::Exact)
}

pub fn mixture_marginal_with(model: &ConditionalModel, how: &Discretization) -> Result<FiniteLaw> {
    let joint = joint_table_with(model, how)?;
    FiniteLaw::from_pairs(joint.x_grid.iter().copied().zip(joint.x_marginal()))
}

/// P_{M,Y} tabulated: mass(x, y) = μ_Y(y)·ν_y({x}).
pub fn joint_table(model: &ConditionalModel) -> Result<JointTable> {
    joint_table_with(model, &Discretization::Exact)
}

pub fn joint_table_with(model: &ConditionalModel, how: &Discretization) -> Result<JointTable> {
    let laws = model
        .families
        .iter()
        .map(|f| f.discretize(how))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    for (j, law) in laws.iter().enumerate() {
        let y = model.y_values()[j];
        let wy = model.y_weights.weights[j];
        for (&x, &w) in law.support.iter().zip(&law.weights) {
            entries.push((x, y, wy * w));
        }
    }
    JointTable::from_entries(entries)
}

/// Exact finite joint pmf on an x-grid × y-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct JointTable {
    x_grid: Vec<f64>,
    y_grid: Vec<f64>,
    /// mass[i][j] is the mass at (x_grid[i], y_grid[j]).
    mass: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    x_grid: Vec<f64>,
    y_grid: Vec<f64>,
    mass: Vec<Vec<f64>>,
}

impl TryFrom<RawTable> for JointTable {
    type Error = SteinError;
    fn try_from(raw: RawTable) -> Result<Self> {
        JointTable::new(raw.x_grid, raw.y_grid, raw.mass)
    }
}

impl From<JointTable> for RawTable {
    fn from(t: JointTable) -> Self {
        RawTable {
            x_grid: t.x_grid,
            y_grid: t.y_grid,
            mass: t.mass,
        }
    }
}

impl JointTable {
    pub fn new(x_grid: Vec<f64>, y_grid: Vec<f64>, mass: Vec<Vec<f64>>) -> Result<Self> {
        if x_grid.is_empty() || y_grid.is_empty() {
            return Err(invalid("joint table", "empty grid"));
        }
        if x_grid.iter().chain(&y_grid).any(|v| !v.is_finite()) {
            return Err(invalid("joint table", "grid contains a non-finite value"));
        }
        if !strictly_increasing(&x_grid) || !strictly_increasing(&y_grid) {
            return Err(invalid("joint table", "grids must be strictly increasing"));
        }
        if mass.len() != x_grid.len() || mass.iter().any(|row| row.len() != y_grid.len()) {
            return Err(invalid(
                "joint table",
                format!("mass must be {}×{}", x_grid.len(), y_grid.len()),
            ));
        }
        if let Some(m) = mass.iter().flatten().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(invalid("joint table", format!("entry {m} is not a probability")));
        }
        let flat: Vec<f64> = mass.iter().flatten().copied().collect();
        let total = pairwise_sum(&flat);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(
                "joint table",
                format!("total mass {total} differs from 1 by more than {MASS_TOL:e}"),
            ));
        }
        Ok(Self { x_grid, y_grid, mass })
    }

    /// Builds a table from `(x, y, mass)` triples; the grids are the sorted
    /// unions of the coordinates and duplicate cells are summed.
    pub fn from_entries(entries: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<Self> {
        let mut cells: BTreeMap<(OrdF64, OrdF64), Vec<f64>> = BTreeMap::new();
        let mut xs = std::collections::BTreeSet::new();
        let mut ys = std::collections::BTreeSet::new();
        for (x, y, m) in entries {
            if !(x.is_finite() && y.is_finite()) {
                return Err(invalid("joint table", "non-finite coordinate"));
            }
            xs.insert(OrdF64(x));
            ys.insert(OrdF64(y));
            cells.entry((OrdF64(x), OrdF64(y))).or_default().push(m);
        }
        let x_grid: Vec<f64> = xs.into_iter().map(|v| v.0).collect();
        let y_grid: Vec<f64> = ys.into_iter().map(|v| v.0).collect();
        let mut mass = vec![vec![0.0; y_grid.len()]; x_grid.len()];
        for ((x, y), ms) in cells {
            let i = find_exact(&x_grid, x.0).unwrap();
            let j = find_exact(&y_grid, y.0).unwrap();
            mass[i][j] = pairwise_sum(&ms);
        }
        Self::new(x_grid, y_grid, mass)
    }

    /// Point mass at a single (x, y).
    pub fn dirac(x: f64, y: f64) -> Self {
        Self {
            x_grid: vec![x],
            y_grid: vec![y],
            mass: vec![vec![1.0]],
        }
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    /// Mass at (x, y), zero off the grid.
    pub fn get(&self, x: f64, y: f64) -> f64 {
        match (find_exact(&self.x_grid, x), find_exact(&self.y_grid, y)) {
            (Some(i), Some(j)) => self.mass[i][j],
            _ => 0.0,
        }
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.mass.iter().map(|row| pairwise_sum(row)).collect()
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        (0..self.y_grid.len())
            .map(|j| pairwise_sum(&self.mass.iter().map(|row| row[j]).collect::<Vec<_>>()))
            .collect()
    }

    /// Positive-mass cells as `(x, y, mass)`, ordered by y then x.
    pub fn entries(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for (j, &y) in self.y_grid.iter().enumerate() {
            for (i, &x) in self.x_grid.iter().enumerate() {
                let m = self.mass[i][j];
                if m > 0.0 {
                    out.push((x, y, m));
                }
            }
        }
        out
    }

    pub fn expect<F: Fn(f64, f64) -> f64>(&self, h: F) -> f64 {
        let terms: Vec<f64> = self.entries().into_iter().map(|(x, y, m)| m * h(x, y)).collect();
        pairwise_sum(&terms)
    }

    /// The same table re-indexed on the given (super-)grids.
    pub fn regrid(&self, x_grid: &[f64], y_grid: &[f64]) -> Result<Self> {
        let mut mass = vec![vec![0.0; y_grid.len()]; x_grid.len()];
        for (x, y, m) in self.entries() {
            let i = find_exact(x_grid, x)
                .ok_or_else(|| SteinError::GridMismatch(format!("x = {x} missing from target grid")))?;
            let j = find_exact(y_grid, y)
                .ok_or_else(|| SteinError::GridMismatch(format!("y = {y} missing from target grid")))?;
            mass[i][j] = m;
        }
        Self::new(x_grid.to_vec(), y_grid.to_vec(), mass)
    }

    /// Both tables placed on the union of their grids, zero-filled.
    pub fn common_grid(a: &Self, b: &Self) -> (Self, Self) {
        let merge = |u: &[f64], v: &[f64]| {
            let mut s: Vec<f64> = u.iter().chain(v).copied().collect();
            s.sort_by(|p, q| p.total_cmp(q));
            s.dedup();
            s
        };
        let xs = merge(&a.x_grid, &b.x_grid);
        let ys = merge(&a.y_grid, &b.y_grid);
        (
            a.regrid(&xs, &ys).expect("union grid contains every cell"),
            b.regrid(&xs, &ys).expect("union grid contains every cell"),
        )
    }
}

/// Conditional model recovered from a joint table.
#[derive(Debug, Clone, PartialEq)]
pub struct Disintegration {
    pub model: ConditionalModel,
    /// y-grid columns with zero mass, dropped as outside the essential range.
    pub dropped_columns: usize,
}

/// Splits a joint table into μ_Y and the normalized columns ν̄_y.
pub fn disintegrate(joint: &JointTable) -> Disintegration {
    let col = joint.y_marginal();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut families = Vec::new();
    let mut dropped = 0;
    for (j, &y) in joint.y_grid.iter().enumerate() {
        if col[j] <= 0.0 {
            dropped += 1;
            continue;
        }
        let pairs = joint
            .x_grid
            .iter()
            .zip(&joint.mass)
            .filter(|(_, row)| row[j] > 0.0)
            .map(|(&x, row)| (x, row[j] / col[j]));
        let (support, weights): (Vec<f64>, Vec<f64>) = pairs.unzip();
        families.push(TargetFamily::FiniteDiscrete(FiniteLaw { support, weights }));
        ys.push(y);
        ws.push(col[j]);
    }
    let model = ConditionalModel {
        y_weights: FiniteLaw { support: ys, weights: ws },
        families,
    };
    Disintegration {
        model,
        dropped_columns: dropped,
    }
}

/// Observed (x, y) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pairs: Vec<(f64, f64)>,
    provenance: String,
}

impl SampleSet {
    pub fn new(pairs: Vec<(f64, f64)>, provenance: impl Into<String>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(invalid("sample set", "no samples"));
        }
        if let Some(i) = pairs.iter().position(|(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(invalid("sample set", format!("pair {i} has a non-finite coordinate")));
        }
        Ok(Self {
            pairs,
            provenance: provenance.into(),
        })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Empirical measure as a joint table.
    pub fn empirical_table(&self) -> JointTable {
        let w = 1.0 / self.pairs.len() as f64;
        let mut counts: BTreeMap<(OrdF64, OrdF64), usize> = BTreeMap::new();
        for &(x, y) in &self.pairs {
            *counts.entry((OrdF64(x), OrdF64(y))).or_default() += 1;
        }
        let entries: Vec<_> = counts.into_iter().map(|((x, y), c)| (x.0, y.0, c as f64 * w)).collect();
        // total is n·(1/n) up to rounding; renormalizing keeps the 1e-12 check honest for huge n
        let total = pairwise_sum(&entries.iter().map(|e| e.2).collect::<Vec<_>>());
        JointTable::from_entries(entries.into_iter().map(|(x, y, m)| (x, y, m / total)))
            .expect("empirical measure is a valid table")
    }
}

/// Result of [`bin_samples`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSamples {
    pub samples: SampleSet,
    /// Pairs whose y fell outside `[edges[0], edges[last]]`.
    pub out_of_range: usize,
    /// Indices of bins that received no sample (non-fatal).
    pub empty_bins: Vec<usize>,
}

/// Replaces every y by the midpoint of its bin `[e_i, e_{i+1})` (the last bin
/// is closed). Pairs outside the edges are dropped and counted.
pub fn bin_samples(samples: &SampleSet, edges: &[f64]) -> Result<BinnedSamples> {
    if edges.len() < 2 || !strictly_increasing(edges) || edges.iter().any(|e| !e.is_finite()) {
        return Err(invalid("bin edges", "need at least two finite, strictly increasing edges"));
    }
    let last = edges.len() - 2;
    let mut occupancy = vec![0usize; edges.len() - 1];
    let mut out = Vec::with_capacity(samples.len());
    let mut dropped = 0;
    for &(x, y) in &samples.pairs {
        if y < edges[0] || y > edges[last + 1] {
            dropped += 1;
            continue;
        }
        // first edge strictly greater than y, minus one
        let b = edges.partition_point(|&e| e <= y).saturating_sub(1).min(last);
        occupancy[b] += 1;
        out.push((x, 0.5 * (edges[b] + edges[b + 1])));
    }
    let empty_bins = occupancy
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| i)
        .collect();
    let label = format!("{} (binned on {} edges)", samples.provenance, edges.len());
    Ok(BinnedSamples {
        samples: SampleSet::new(out, label)?,
        out_of_range: dropped,
        empty_bins,
    })
}
