//! Apply each family's Stein operator to a few test functions and confirm
//! E[N f(X)] = 0 under the family.

use condstein::operators::{apply, zero_mean_residual};
use condstein::{FiniteLaw, TargetFamily, TestFunction};

fn main() -> condstein::Result<()> {
    let families = [
        TargetFamily::gaussian(1.0, 2.0)?,
        TargetFamily::poisson(3.5)?,
        TargetFamily::gamma(2.0, 0.5)?,
        TargetFamily::finite(FiniteLaw::new(vec![-1.0, 0.0, 2.0], vec![0.2, 0.5, 0.3])?),
    ];
    let tests = [
        ("x", TestFunction::monomial(1)),
        ("x^2", TestFunction::monomial(2)),
        ("sin", TestFunction::with_derivative(f64::sin, f64::cos)),
    ];

    for fam in &families {
        println!("{fam}");
        // the finite operator sees f only through its values on the support,
        // with f(s_0) = 0
        let anchor = fam.support_grid().map(|g| g[0]);
        for (name, f) in &tests {
            let f = match anchor {
                Some(a) if fam.is_finite_discrete() => f.pinned_at(a),
                _ => f.clone(),
            };
            let at = if fam.is_finite_discrete() { 0.0 } else { 1.0 };
            println!(
                "  f = {name:<4} N f({at}) = {:>9.5}   |E N f| = {:.2e}",
                apply(fam, &f, at)?,
                zero_mean_residual(fam, &f)?
            );
        }
    }
    Ok(())
}
