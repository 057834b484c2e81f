//! Small numeric helpers shared by the solvers and estimators.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

/// Probability-mass tolerance used for every normalization check.
pub const MASS_TOL: f64 = 1e-12;

/// Pairwise (cascade) summation; rounding error grows as O(log n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Centered finite difference with relative step `max(1e-6, 1e-6·|x|)`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = (1e-6 * x.abs()).max(1e-6);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: rational initial guess refined by Newton steps on the cdf.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Acklam's rational approximation
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let mut z = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        // Halley step
        let e = std_normal_cdf(z) - p;
        let u = e / std_normal_pdf(z);
        if !u.is_finite() {
            break;
        }
        z -= u / (1.0 + 0.5 * z * u);
    }
    z
}

/// Log of the Gamma(shape, rate) density at x > 0.
pub fn gamma_ln_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Lower and upper regularized incomplete gamma of `rate·x`.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        gamma_lr(shape, rate * x)
    }
}

pub fn gamma_sf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x == f64::INFINITY {
        0.0
    } else {
        gamma_ur(shape, rate * x)
    }
}

/// Gamma quantile by safeguarded Newton iteration in log-space.
///
/// Lower-tail probabilities use the lower regularized function and upper-tail
/// ones the upper, so quantiles far in either tail stay accurate.
pub fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    // residual in the tail we are solving for, positive when x is too large (lower) / too small (upper)
    let resid = |x: f64| {
        if upper {
            target - gamma_sf(shape, rate, x)
        } else {
            gamma_cdf(shape, rate, x) - target
        }
    };

    // bracket in log-space
    let mean = shape / rate;
    let mut lo = mean.ln();
    let mut hi = lo;
    while resid(lo.exp()) > 0.0 {
        lo -= 2.0;
        if lo < -745.0 {
            return 0.0;
        }
    }
    while resid(hi.exp()) < 0.0 {
        hi += 1.0;
        if hi > 709.0 {
            return f64::INFINITY;
        }
    }

    // Wilson–Hilferty start, clamped into the bracket
    let z = std_normal_quantile(p);
    let wh = 1.0 - 1.0 / (9.0 * shape) + z / (9.0 * shape).sqrt();
    let mut s = if wh > 0.0 {
        (mean * wh * wh * wh).ln()
    } else {
        0.5 * (lo + hi)
    };
    if !(s > lo && s < hi) {
        s = 0.5 * (lo + hi);
    }

    for _ in 0..200 {
        let x = s.exp();
        let r = resid(x);
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        // d resid / d s = ±pdf(x)·x, with matching sign in both tails
        let dens = (gamma_ln_pdf(shape, rate, x) + s).exp();
        let mut next = s - r / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * s.abs().max(1.0) || hi - lo < 1e-15 {
            return next.exp();
        }
        s = next;
    }
    s.exp()
}

/// Poisson log-pmf at integer k ≥ 0.
pub fn poisson_ln_pmf(lambda: f64, k: u64) -> f64 {
    let kf = k as f64;
    kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)
}

/// True when `x` is a non-negative integer representable exactly.
pub fn as_count(x: f64) -> Option<u64> {
    if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 {
        Some(x as u64)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-14, 1e-6, 0.02, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-10] {
            let z = std_normal_quantile(p);
            let back = std_normal_cdf(z);
            assert!((back - p).abs() <= 1e-13 * p.max(1e-3), "p={p} z={z} back={back}");
        }
    }

    #[test]
    fn gamma_quantile_inverts_cdf_in_both_tails() {
        for &(a, b) in &[(0.5, 1.0), (2.0, 1.0), (7.5, 3.0), (40.0, 0.5)] {
            for &p in &[1e-14, 1e-3, 0.25, 0.5, 0.9] {
                let x = gamma_quantile(a, b, p);
                assert!((gamma_cdf(a, b, x) - p).abs() <= 1e-12 * p.max(1e-2), "a={a} p={p}");
            }
            let x = gamma_quantile(a, b, 1.0 - 1e-14);
            let sf = gamma_sf(a, b, x);
            assert!((sf - 1e-14).abs() < 1e-16, "a={a} sf={sf}");
        }
    }

    #[test]
    fn central_difference_of_cubic() {
        let d = central_difference(|x| x * x * x, 2.0);
        assert!((d - 12.0).abs() < 1e-8);
    }
}
