//! Conditional Stein discrepancies for models of the form "X given Y = y
//! follows ν_y", with Y on a finite set.
//!
//! A [`ConditionalModel`] pairs a law μ_Y on finitely many y values with one
//! [`TargetFamily`] per y (Gaussian, Poisson, Gamma or finite-discrete). For
//! each family the crate provides its Stein operator ([`operators::apply`]),
//! the solution of the Stein equation N f = h − E[h] ([`equation::solve`]),
//! and, built on those, the discrepancy E[N_Y f(X, Y)] of a joint table or a
//! sample against the model ([`discrepancy`]). Exact total-variation and
//! Wasserstein oracles live in [`oracle`]; seeded samplers and model
//! perturbations in [`sim`].
//!
//! ```
//! use condstein::{ConditionalModel, FiniteLaw, TargetFamily};
//! use condstein::discrepancy::{tv_bound, Observed};
//! use condstein::measures::joint_table;
//!
//! let model = ConditionalModel::new(
//!     FiniteLaw::uniform(vec![0.0, 1.0]).unwrap(),
//!     vec![
//!         TargetFamily::finite(FiniteLaw::uniform(vec![0.0, 1.0]).unwrap()),
//!         TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0], vec![0.9, 0.1]).unwrap()),
//!     ],
//! )
//! .unwrap();
//! let joint = joint_table(&model).unwrap();
//! let report = tv_bound(Observed::Exact(&joint), &model).unwrap();
//! assert!(report.sup_value < 1e-12);
//! ```

pub mod cli;
pub mod discrepancy;
pub mod equation;
pub mod error;
pub mod measures;
pub mod numeric;
pub mod operators;
pub mod oracle;
pub mod quadrature;
pub mod sim;
pub mod validate;

pub use equation::{BivariateSource, Source};
pub use error::{Result, SteinError};
pub use measures::{ConditionalModel, FiniteLaw, JointTable, SampleSet, TargetFamily};
pub use operators::{BivariateTestFunction, TestFunction};
