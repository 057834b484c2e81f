//! Stein equation N f = h − E_ν[h] for each family, and the bivariate
//! solution f_h with zero extension off the essential range.
//!
//! Normalizations pinning the unique solution in the class:
//! f(0) = 0 for Poisson, f(s_0) = 0 for finite-discrete laws, and the
//! decaying-integral solution for Gaussian and Gamma.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Result, SteinError};
use crate::measures::{ConditionalModel, TargetFamily};
use crate::numeric::{pairwise_sum, poisson_ln_pmf};
use crate::operators::{apply, BivariateTestFunction, TestFunction};
use crate::quadrature::{integrate, ABS_TOL};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Planar = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type BreakFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Residual target for every Stein solution.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Kernel cut-off: e^{-46} ≈ 1e-20.
const KERNEL_LOG_CUT: f64 = 46.0;

/// Source function h for a single-variable Stein equation, with the points
/// where it jumps or kinks.
#[derive(Clone)]
pub struct Source {
    f: Scalar,
    breaks: Vec<f64>,
    label: String,
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Source({})", self.label)
    }
}

impl Source {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            breaks: Vec::new(),
            label: label.into(),
        }
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }

    /// 𝟙{x ≤ a}.
    pub fn step(a: f64) -> Self {
        Self::new(format!("1{{x<={a}}}"), move |x| if x <= a { 1.0 } else { 0.0 }).with_breaks(vec![a])
    }

    /// 𝟙{a < x ≤ b}.
    pub fn interval(a: f64, b: f64) -> Self {
        Self::new(format!("1{{{a}<x<={b}}}"), move |x| if x > a && x <= b { 1.0 } else { 0.0 })
            .with_breaks(vec![a, b])
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Source function h(x, y) with per-section break points.
#[derive(Clone)]
pub struct BivariateSource {
    f: Planar,
    breaks: BreakFn,
    label: String,
}

impl fmt::Debug for BivariateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BivariateSource({})", self.label)
    }
}

impl BivariateSource {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            breaks: Arc::new(|_| Vec::new()),
            label: label.into(),
        }
    }

    /// `breaks(y)` lists the x-jumps/kinks of the section at y.
    pub fn with_breaks(mut self, breaks: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.breaks = Arc::new(breaks);
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_, _| c)
    }

    /// h(x, y) = h₀(x).
    pub fn from_x(h: Source) -> Self {
        let label = h.label.clone();
        let b = h.breaks.clone();
        let f = h.f.clone();
        Self::new(label, move |x, _| f(x)).with_breaks(move |_| b.clone())
    }

    /// 𝟙{x0 ≤ x ≤ x1, y0 ≤ y ≤ y1}.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self::new(format!("rect[{x0},{x1}]x[{y0},{y1}]"), move |x, y| {
            if x >= x0 && x <= x1 && y >= y0 && y <= y1 { 1.0 } else { 0.0 }
        })
        .with_breaks(move |_| vec![x0, x1])
    }

    /// Indicator of a finite set of points.
    pub fn point_set(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup();
        // isolated points carry no mass under a continuous law, so no breaks
        let lookup = Arc::new(points);
        Self::new(label, move |x, y| {
            let key = (x, y);
            match lookup.binary_search_by(|p| p.0.total_cmp(&key.0).then(p.1.total_cmp(&key.1))) {
                Ok(_) => 1.0,
                Err(_) => 0.0,
            }
        })
    }

    /// sign·x.
    pub fn projection_x(sign: f64) -> Self {
        Self::new(if sign > 0.0 { "+x" } else { "-x" }, move |x, _| sign * x)
    }

    /// sign·y.
    pub fn projection_y(sign: f64) -> Self {
        Self::new(if sign > 0.0 { "+y" } else { "-y" }, move |_, y| sign * y)
    }

    /// Euclidean distance to an anchor point.
    pub fn distance_to(ax: f64, ay: f64) -> Self {
        Self::new(format!("dist({ax},{ay})"), move |x, y| (x - ax).hypot(y - ay)).with_breaks(move |_| vec![ax])
    }

    /// max(0, ux·x + uy·y + c).
    pub fn ramp(ux: f64, uy: f64, c: f64) -> Self {
        Self::new(format!("ramp({ux:.6},{uy:.6},{c:.6})"), move |x, y| (ux * x + uy * y + c).max(0.0))
            .with_breaks(move |y| if ux != 0.0 { vec![-(uy * y + c) / ux] } else { Vec::new() })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }

    pub fn breaks_at(&self, y: f64) -> Vec<f64> {
        (self.breaks)(y)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn section(&self, y: f64) -> Source {
        let f = self.f.clone();
        Source {
            f: Arc::new(move |x| f(x, y)),
            breaks: self.breaks_at(y),
            label: format!("{}|y={y}", self.label),
        }
    }
}

/// Solution of N f = h − E_ν[h].
#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub f: TestFunction,
    pub h: Source,
    pub centered_mean: f64,
    pub family: TargetFamily,
}

/// Solves the Stein equation for one family.
pub fn solve(family: &TargetFamily, h: &Source) -> Result<SteinSolution> {
    let centered_mean = family.expect(|x| h.eval(x), h.breaks())?;
    let f = match family {
        TargetFamily::FiniteDiscrete(law) => solve_finite(law.support(), law.weights(), h, centered_mean),
        TargetFamily::Poisson { lambda } => solve_poisson(*lambda, h, centered_mean),
        TargetFamily::Gaussian { mean, variance } => solve_gaussian(*mean, *variance, h, centered_mean),
        TargetFamily::Gamma { shape, rate } => solve_gamma(*shape, *rate, h, centered_mean),
    };
    Ok(SteinSolution {
        f,
        h: h.clone(),
        centered_mean,
        family: family.clone(),
    })
}

/// Forward recursion f(s_k) = S_{k−1}/p_k with S_k = Σ_{j≤k} g_j·p_j up to the
/// heaviest point, and the backward form f(s_k) = −T_k/p_k, T_k = Σ_{j≥k} g_j·p_j,
/// after it. Both agree when Σ g·p = 0.
fn solve_finite(support: &[f64], p: &[f64], h: &Source, eh: f64) -> TestFunction {
    let n = support.len();
    let gp: Vec<f64> = support.iter().zip(p).map(|(&x, &w)| (h.eval(x) - eh) * w).collect();
    let pivot = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut values = vec![0.0; n];
    let mut forward = 0.0;
    for k in 1..=pivot.min(n - 1) {
        forward += gp[k - 1];
        values[k] = forward / p[k];
    }
    let mut backward = 0.0;
    for k in (pivot.max(1)..n).rev() {
        backward += gp[k];
        if k > pivot {
            values[k] = -backward / p[k];
        }
    }
    values[0] = 0.0;
    TestFunction::from_table(support.to_vec(), values)
}

/// Poisson solution f(k+1) = Σ_{j≤k} g(j)·p(j) / (λ·p(k)), evaluated with pmf
/// ratios so no tail term underflows: forward sums below the mode, tail sums
/// from the mode on.
fn poisson_value(lambda: f64, g: &dyn Fn(u64) -> f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let j = k - 1;
    let lp = |i: u64| poisson_ln_pmf(lambda, i);
    let lpj = lp(j);
    let mode = lambda.floor() as u64;
    if j < mode {
        let terms: Vec<f64> = (0..=j).map(|i| g(i) * (lp(i) - lpj).exp()).collect();
        pairwise_sum(&terms) / lambda
    } else {
        let mut terms = Vec::new();
        let mut i = j + 1;
        loop {
            let r = lp(i) - lpj;
            terms.push(g(i) * r.exp());
            if r < -KERNEL_LOG_CUT - 10.0 {
                break;
            }
            i += 1;
        }
        -pairwise_sum(&terms) / lambda
    }
}

fn solve_poisson(lambda: f64, h: &Source, eh: f64) -> TestFunction {
    let fam = TargetFamily::Poisson { lambda };
    let end = fam.poisson_grid_end() + 1;
    let hh = h.clone();
    let g = move |i: u64| hh.eval(i as f64) - eh;
    let table: Vec<f64> = (0..=end).map(|k| poisson_value(lambda, &g, k)).collect();
    let table = Arc::new(table);
    let hh = h.clone();
    TestFunction::with_derivative(
        move |x| match crate::numeric::as_count(x) {
            Some(k) if (k as usize) < table.len() => table[k as usize],
            Some(k) => {
                let g = |i: u64| hh.eval(i as f64) - eh;
                poisson_value(lambda, &g, k)
            }
            None => 0.0,
        },
        |_| 0.0,
    )
}

/// f(x) = ∫_{−∞}^x g(t)·e^{−((t−m)² − (x−m)²)/(2σ²)} dt for x ≤ m and the
/// mirrored upper-tail integral for x > m; the kernel is bounded by 1 so the
/// exponential ratio is never formed.
fn gaussian_value(mean: f64, variance: f64, h: &Source, eh: f64, x: f64) -> f64 {
    let d = (x - mean).abs();
    let width = -d + (d * d + 2.0 * KERNEL_LOG_CUT * variance).sqrt();
    let kernel = |t: f64| (-(t - x) * (t + x - 2.0 * mean) / (2.0 * variance)).exp();
    let integrand = |t: f64| (h.eval(t) - eh) * kernel(t);
    let r = if x <= mean {
        integrate(integrand, x - width, x, h.breaks(), ABS_TOL)
    } else {
        integrate(integrand, x, x + width, h.breaks(), ABS_TOL).map(|v| -v)
    };
    r.unwrap_or(f64::NAN)
}

fn solve_gaussian(mean: f64, variance: f64, h: &Source, eh: f64) -> TestFunction {
    let (h1, h2) = (h.clone(), h.clone());
    TestFunction::with_derivative(
        move |x| gaussian_value(mean, variance, &h1, eh, x),
        move |x| (h2.eval(x) - eh) + (x - mean) / variance * gaussian_value(mean, variance, &h2, eh, x),
    )
}

/// f(x) = (1/(x·q(x)))·∫_0^x g·q below the mean, −(1/(x·q(x)))·∫_x^∞ g·q above it,
/// with q the Gamma density. Both are written with bounded kernels.
fn gamma_value(shape: f64, rate: f64, h: &Source, eh: f64, x: f64) -> f64 {
    if !(x > 0.0 && x.is_finite()) {
        return f64::NAN;
    }
    let g = |t: f64| h.eval(t) - eh;
    let r = if x <= shape / rate {
        // t = x·v^{1/α}: the u^{α−1} singularity becomes a constant 1/α
        let inv = 1.0 / shape;
        let breaks: Vec<f64> = h
            .breaks()
            .iter()
            .filter(|&&b| b > 0.0 && b < x)
            .map(|&b| (b / x).powf(shape))
            .collect();
        integrate(
            |v| {
                let u = v.powf(inv);
                g(x * u) * (rate * x * (1.0 - u)).exp()
            },
            0.0,
            1.0,
            &breaks,
            ABS_TOL,
        )
        .map(|v| v * inv)
    } else {
        // t = x + s, kernel (1 + s/x)^{α−1}·e^{−βs} decreasing in s
        let log_kernel = |s: f64| (shape - 1.0) * (s / x).ln_1p() - rate * s;
        let mut span = 1.0 / rate;
        while log_kernel(span) > -KERNEL_LOG_CUT - 4.0 - (1.0 + x + span).ln() {
            span *= 2.0;
        }
        let breaks: Vec<f64> = h.breaks().iter().filter(|&&b| b > x).map(|&b| b - x).collect();
        integrate(|s| g(x + s) * log_kernel(s).exp(), 0.0, span, &breaks, ABS_TOL).map(|v| -v / x)
    };
    r.unwrap_or(f64::NAN)
}

fn solve_gamma(shape: f64, rate: f64, h: &Source, eh: f64) -> TestFunction {
    let (h1, h2) = (h.clone(), h.clone());
    TestFunction::with_derivative(
        move |x| gamma_value(shape, rate, &h1, eh, x),
        move |x| {
            let f = gamma_value(shape, rate, &h2, eh, x);
            ((h2.eval(x) - eh) - (shape - rate * x) * f) / x
        },
    )
}

/// f_h(·, y) = solution for ν_y at every y of the essential range, zero elsewhere.
pub fn solve_conditional(model: &ConditionalModel, h: &BivariateSource) -> Result<BivariateTestFunction> {
    let sections = model
        .y_values()
        .par_iter()
        .zip(model.families().par_iter())
        .map(|(&y, fam)| {
            solve(fam, &h.section(y))
                .map(|s| (y, s.f))
                .map_err(|e| SteinError::AtSection { y, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BivariateTestFunction::Sections(sections))
}

/// max over `grid` of |N f(x) − (h(x) − E h)|.
pub fn residual(family: &TargetFamily, sol: &SteinSolution, grid: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &x in grid {
        let lhs = apply(family, &sol.f, x)?;
        let r = (lhs - (sol.h.eval(x) - sol.centered_mean)).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Default check grid: full support for discrete families, 512 points over
/// the integration window for continuous ones.
pub fn check_grid(family: &TargetFamily) -> Vec<f64> {
    if let Some(grid) = family.support_grid() {
        return grid;
    }
    let (lo, hi) = match family {
        TargetFamily::Gamma { shape, rate } => {
            // stay where the density is representable
            let (lo, hi) = family.window();
            let hi = hi.min(shape / rate + 60.0 * shape.sqrt() / rate);
            (lo.max(1e-12), hi)
        }
        _ => family.window(),
    };
    let n = 512;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
