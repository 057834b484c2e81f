//! Stein-equation solutions checked against routes that do not share code
//! with the solver: dense linear algebra for discrete laws, finite
//! differences and closed forms for continuous ones.

use condstein::equation::{solve, Source};
use condstein::numeric::{gamma_cdf, poisson_ln_pmf, std_normal_cdf, std_normal_pdf};
use condstein::{FiniteLaw, TargetFamily};
use nalgebra::{DMatrix, DVector};

type Reference = Box<dyn Fn(f64) -> f64>;

/// Solves N f = h − E h on a finite law as a dense system with f(s_0) = 0.
/// Row k is the operator at s_k; the last row is dropped in favour of the
/// boundary condition since the rows are linearly dependent through E[N f] = 0.
fn dense_finite(law: &FiniteLaw, h: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let s = law.support();
    let p = law.weights();
    let n = s.len();
    let eh: f64 = s.iter().zip(p).map(|(&x, &w)| w * h(x)).sum();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    for k in 0..n - 1 {
        a[(k + 1, k)] = -1.0;
        a[(k + 1, k + 1)] = p[k + 1] / p[k];
        b[k + 1] = h(s[k]) - eh;
    }
    let f = a.lu().solve(&b).expect("nonsingular");
    f.iter().copied().collect()
}

#[test]
fn finite_recursion_matches_dense_solve() {
    let law = FiniteLaw::new(
        vec![-2.0, -0.5, 0.0, 1.0, 2.5, 3.0, 7.0],
        vec![0.05, 0.1, 0.3, 0.2, 0.2, 0.1, 0.05],
    )
    .unwrap();
    let fam = TargetFamily::finite(law.clone());
    let hs: Vec<(Source, Reference)> = vec![
        (Source::step(0.5), Box::new(|x| if x <= 0.5 { 1.0 } else { 0.0 })),
        (Source::new("sin", |x: f64| x.sin()), Box::new(|x: f64| x.sin())),
        (Source::interval(-1.0, 2.5), Box::new(|x| if x > -1.0 && x <= 2.5 { 1.0 } else { 0.0 })),
    ];
    for (src, h) in &hs {
        let sol = solve(&fam, src).unwrap();
        let dense = dense_finite(&law, h.as_ref());
        for (k, &x) in law.support().iter().enumerate() {
            assert!((sol.f.eval(x) - dense[k]).abs() < 1e-10, "{} at {x}: {} vs {}", src.label(), sol.f.eval(x), dense[k]);
        }
    }
}

#[test]
fn poisson_recursion_matches_truncated_dense_solve() {
    // λ f(k+1) − k f(k) = g(k) for k = 0..K−1 with f(0) = 0; truncation at K
    // only affects rows near K, far beyond the compared range
    let lambda = 3.7;
    let k_max = 60;
    let h = |x: f64| if x <= 2.0 { 1.0 } else { 0.0 };
    let eh: f64 = (0..=2).map(|k| poisson_ln_pmf(lambda, k).exp()).sum();
    let n = k_max + 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    for k in 0..k_max {
        a[(k + 1, k)] = -(k as f64);
        a[(k + 1, k + 1)] = lambda;
        b[k + 1] = h(k as f64) - eh;
    }
    let dense = a.lu().solve(&b).unwrap();
    let sol = solve(&TargetFamily::poisson(lambda).unwrap(), &Source::step(2.0)).unwrap();
    for k in 0..15 {
        assert!((sol.f.eval(k as f64) - dense[k]).abs() < 1e-10, "k={k}");
    }
}

#[test]
fn poisson_indicator_closed_form() {
    // h = 𝟙{x = 0}, λ = 1: f(1) = (h(0) − E h)/λ = 1 − e^{−1}
    let sol = solve(&TargetFamily::poisson(1.0).unwrap(), &Source::interval(-0.5, 0.5)).unwrap();
    assert!((sol.f.eval(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
}

/// Five-point central difference.
fn derivative(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

#[test]
fn continuous_residual_with_numerical_derivative() {
    let cases = [
        (TargetFamily::gaussian(0.3, 1.7).unwrap(), vec![-3.0, -1.2, 0.0, 0.9, 2.2, 4.0]),
        (TargetFamily::gamma(2.5, 1.5).unwrap(), vec![0.2, 0.8, 1.5, 2.5, 4.0, 7.0]),
        (TargetFamily::gamma(0.6, 2.0).unwrap(), vec![0.05, 0.2, 0.5, 1.0, 2.0]),
    ];
    let sources = [
        Source::new("sin", |x: f64| (1.3 * x).sin()),
        Source::new("bump", |x: f64| (-(x - 1.0) * (x - 1.0)).exp()),
        Source::step(1.1),
    ];
    for (fam, xs) in &cases {
        for h in &sources {
            let sol = solve(fam, h).unwrap();
            let f = |x: f64| sol.f.eval(x);
            for &x in xs {
                if h.breaks().iter().any(|b| (b - x).abs() < 0.05) {
                    continue;
                }
                let d = derivative(&f, x, 1e-3 * x.abs().max(0.1));
                let lhs = match fam {
                    TargetFamily::Gaussian { mean, variance } => d - (x - mean) / variance * f(x),
                    TargetFamily::Gamma { shape, rate } => x * d + (shape - rate * x) * f(x),
                    _ => unreachable!(),
                };
                let rhs = h.eval(x) - sol.centered_mean;
                assert!((lhs - rhs).abs() < 1e-6, "{fam} {} x={x}: {lhs} vs {rhs}", h.label());
            }
        }
    }
}

#[test]
fn gaussian_indicator_closed_form() {
    // h = 𝟙{x ≤ a} under N(m, σ²): f(x) = σ·Φ(min(z, z_a))·Φ̄(max(z, z_a))/φ(z)
    let (m, v, a) = (0.5, 2.0, 1.0);
    let sd: f64 = f64::sqrt(v);
    let sol = solve(&TargetFamily::gaussian(m, v).unwrap(), &Source::step(a)).unwrap();
    let za = (a - m) / sd;
    for i in 0..33 {
        let z = -8.0 + 0.5 * i as f64;
        let expected = sd * std_normal_cdf(z.min(za)) * std_normal_cdf(-z.max(za)) / std_normal_pdf(z);
        let got = sol.f.eval(m + sd * z);
        assert!((got - expected).abs() <= 1e-9 * expected.max(1.0), "z={z}: {got} vs {expected}");
    }
    // the standard-normal step at 0 gives √(2π)/4
    let sol = solve(&TargetFamily::gaussian(0.0, 1.0).unwrap(), &Source::step(0.0)).unwrap();
    assert!((sol.f.eval(0.0) - 0.626_657_068_657_750_1).abs() < 1e-12);
}

#[test]
fn gamma_indicator_closed_form() {
    // h = 𝟙{x ≤ a}: x q(x) f(x) = F(min(x,a))·(1 − F(max(x,a))) with q the density
    let (shape, rate, a) = (2.5, 1.5, 1.2);
    let sol = solve(&TargetFamily::gamma(shape, rate).unwrap(), &Source::step(a)).unwrap();
    let fa = gamma_cdf(shape, rate, a);
    for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0] {
        let q = condstein::numeric::gamma_ln_pdf(shape, rate, x).exp();
        let fx = gamma_cdf(shape, rate, x);
        let expected = fx.min(fa) * (1.0 - fx.max(fa)) / (x * q);
        let got = sol.f.eval(x);
        assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0), "x={x}: {got} vs {expected}");
    }
}

#[test]
fn solution_is_linear_in_the_source() {
    let fams = [
        TargetFamily::gaussian(0.0, 1.0).unwrap(),
        TargetFamily::gamma(3.0, 2.0).unwrap(),
        TargetFamily::poisson(2.5).unwrap(),
    ];
    for fam in &fams {
        let h1 = Source::step(1.0);
        let h2 = Source::new("cos", |x: f64| x.cos());
        let sum = Source::new("2*step+cos", |x: f64| 2.0 * if x <= 1.0 { 1.0 } else { 0.0 } + x.cos())
            .with_breaks(vec![1.0]);
        let (a, b, c) = (solve(fam, &h1).unwrap(), solve(fam, &h2).unwrap(), solve(fam, &sum).unwrap());
        for &x in &[0.0, 1.0, 2.0, 3.0, 4.0] {
            if !fam.in_domain(x) {
                continue;
            }
            let combo = 2.0 * a.f.eval(x) + b.f.eval(x);
            assert!((c.f.eval(x) - combo).abs() < 1e-9, "{fam} x={x}");
        }
    }
}
