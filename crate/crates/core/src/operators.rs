//! Stein operators for the four catalogued families.
//!
//! | family         | operator                                              |
//! |----------------|-------------------------------------------------------|
//! | Gaussian(m,σ²) | N f(x) = f′(x) − ((x − m)/σ²)·f(x)                     |
//! | Poisson(λ)     | N f(k) = λ·f(k+1) − k·f(k)                             |
//! | Gamma(α,β)     | N f(x) = x·f′(x) + (α − βx)·f(x)                       |
//! | FiniteDiscrete | N f(s_k) = f(s_{k+1})·p_{k+1}/p_k − f(s_k), N f(s_K) = −f(s_K) |
//!
//! The finite-discrete class requires `f(s_0) = 0`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SteinError};
use crate::measures::{ConditionalModel, TargetFamily};
use crate::numeric::{as_count, central_difference};

/// Boundary tolerance for `f(s_0) = 0`.
pub const BOUNDARY_TOL: f64 = 1e-14;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Planar = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Test function f ∈ 𝒞 with an optional analytic derivative.
///
/// Without an analytic derivative, `deriv` falls back to a centered finite
/// difference. Integer-domain operators only use `eval`.
#[derive(Clone)]
pub struct TestFunction {
    eval: Scalar,
    deriv: Option<Scalar>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("analytic_derivative", &self.deriv.is_some())
            .finish()
    }
}

impl TestFunction {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            deriv: None,
        }
    }

    pub fn with_derivative(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(f),
            deriv: Some(Arc::new(df)),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::with_derivative(move |_| c, |_| 0.0)
    }

    /// Σ_k coeffs[k]·x^k.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let c = Arc::new(coeffs);
        let d = c.clone();
        Self::with_derivative(
            move |x| c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
            move |x| {
                d.iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a)
            },
        )
    }

    pub fn monomial(k: u32) -> Self {
        let mut c = vec![0.0; k as usize + 1];
        c[k as usize] = 1.0;
        Self::polynomial(c)
    }

    /// Function given by values at exact points; zero elsewhere.
    pub fn from_table(points: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), values.len());
        Self::with_derivative(
            move |x| match points.binary_search_by(|p| p.total_cmp(&x)) {
                Ok(i) => values[i],
                Err(_) => 0.0,
            },
            |_| 0.0,
        )
    }

    /// 𝟙{x = point}.
    pub fn indicator_at(point: f64) -> Self {
        Self::with_derivative(move |x| if x == point { 1.0 } else { 0.0 }, |_| 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match &self.deriv {
            Some(d) => d(x),
            None => central_difference(|t| (self.eval)(t), x),
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.deriv.is_some()
    }

    /// a·f + b·g.
    pub fn combine(a: f64, f: &TestFunction, b: f64, g: &TestFunction) -> Self {
        let (fe, ge) = (f.eval.clone(), g.eval.clone());
        let eval = move |x| a * fe(x) + b * ge(x);
        match (&f.deriv, &g.deriv) {
            (Some(fd), Some(gd)) => {
                let (fd, gd) = (fd.clone(), gd.clone());
                Self::with_derivative(eval, move |x| a * fd(x) + b * gd(x))
            }
            _ => {
                let (f, g) = (f.clone(), g.clone());
                Self::with_derivative(eval, move |x| a * f.deriv(x) + b * g.deriv(x))
            }
        }
    }

    /// f − f(anchor): the representative satisfying the finite-discrete boundary condition.
    pub fn pinned_at(&self, anchor: f64) -> Self {
        let c = self.eval(anchor);
        Self::combine(1.0, self, -c, &Self::constant(1.0))
    }
}

/// Bivariate test function f ∈ 𝒞̃; N acts on the first argument.
#[derive(Clone)]
pub enum BivariateTestFunction {
    /// f(x, y) = g(x) for every y.
    Uniform(TestFunction),
    /// Arbitrary f(x, y); sections take finite-difference derivatives in x.
    Planar(Planar),
    /// Explicit sections at finitely many y; zero for every other y.
    Sections(Vec<(f64, TestFunction)>),
}

impl fmt::Debug for BivariateTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform(_) => write!(f, "BivariateTestFunction::Uniform"),
            Self::Planar(_) => write!(f, "BivariateTestFunction::Planar"),
            Self::Sections(s) => write!(f, "BivariateTestFunction::Sections({} ys)", s.len()),
        }
    }
}

impl BivariateTestFunction {
    pub fn zero() -> Self {
        Self::Sections(Vec::new())
    }

    pub fn planar(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Planar(Arc::new(f))
    }

    /// `section` at `y`, zero at every other y.
    pub fn single_section(y: f64, section: TestFunction) -> Self {
        Self::Sections(vec![(y, section)])
    }

    pub fn section(&self, y: f64) -> TestFunction {
        match self {
            Self::Uniform(g) => g.clone(),
            Self::Planar(f) => {
                let f = f.clone();
                TestFunction::new(move |x| f(x, y))
            }
            Self::Sections(s) => s
                .iter()
                .find(|(sy, _)| *sy == y)
                .map(|(_, g)| g.clone())
                .unwrap_or_else(TestFunction::zero),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Uniform(g) => g.eval(x),
            Self::Planar(f) => f(x, y),
            Self::Sections(_) => self.section(y).eval(x),
        }
    }
}

/// N f(x) for the given family.
pub fn apply(family: &TargetFamily, f: &TestFunction, x: f64) -> Result<f64> {
    let v = match family {
        TargetFamily::Gaussian { mean, variance } => {
            if !x.is_finite() {
                return Err(family.domain_error(x));
            }
            f.deriv(x) - (x - mean) / variance * f.eval(x)
        }
        TargetFamily::Poisson { lambda } => {
            let k = as_count(x).ok_or_else(|| family.domain_error(x))? as f64;
            lambda * f.eval(k + 1.0) - k * f.eval(k)
        }
        TargetFamily::Gamma { shape, rate } => {
            if !(x.is_finite() && x > 0.0) {
                return Err(family.domain_error(x));
            }
            x * f.deriv(x) + (shape - rate * x) * f.eval(x)
        }
        TargetFamily::FiniteDiscrete(law) => {
            let k = law.index_of(x).ok_or_else(|| family.domain_error(x))?;
            let s = law.support();
            let f0 = f.eval(s[0]);
            if f0.abs() > BOUNDARY_TOL {
                return Err(SteinError::Boundary { at: s[0], value: f0 });
            }
            let p = law.weights();
            if k + 1 < s.len() {
                f.eval(s[k + 1]) * (p[k + 1] / p[k]) - f.eval(x)
            } else {
                -f.eval(x)
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SteinError::OverflowGuard(x))
    }
}

/// |E_ν[N f]| by exact summation (discrete) or quadrature (continuous).
pub fn zero_mean_residual(family: &TargetFamily, f: &TestFunction) -> Result<f64> {
    let failure = std::sync::Mutex::new(None);
    let value = family.expect(
        |x| match apply(family, f, x) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                0.0
            }
        },
        &[],
    )?;
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(value.abs())
}

/// N_y f(x, y): the operator of ν_y applied to the section f(·, y).
pub fn conditional_apply(model: &ConditionalModel, f: &BivariateTestFunction, x: f64, y: f64) -> Result<f64> {
    let family = model.family_at(y)?;
    apply(family, &f.section(y), x)
}

/// Test dictionary {1, x, x², x³, x⁴} adapted to the family's class.
pub fn polynomial_dictionary(family: &TargetFamily) -> Vec<TestFunction> {
    (0..=4)
        .map(|k| {
            let m = TestFunction::monomial(k);
            match family {
                TargetFamily::FiniteDiscrete(law) => m.pinned_at(law.support()[0]),
                _ => m,
            }
        })
        .collect()
}
