//! When every y shares one family the conditional discrepancy reduces to the
//! marginal one: data with X independent of Y sits inside the noise band,
//! data with X depending on Y does not.

use condstein::discrepancy::empirical_stein;
use condstein::equation::solve_conditional;
use condstein::sim::{sample_independent, sample_model, Seed};
use condstein::{BivariateSource, ConditionalModel, FiniteLaw, TargetFamily};

fn main() -> condstein::Result<()> {
    let family = TargetFamily::poisson(2.0)?;
    let y_law = FiniteLaw::uniform(vec![0.0, 1.0, 2.0])?;
    let model = ConditionalModel::independent(family.clone(), y_law.clone())?;
    let dependent = ConditionalModel::new(
        y_law.clone(),
        vec![TargetFamily::poisson(1.5)?, TargetFamily::poisson(2.0)?, TargetFamily::poisson(2.5)?],
    )?;
    let h = BivariateSource::new("1{x ≤ 1}·y", |x, y| if x <= 1.0 { y } else { 0.0 })
        .with_breaks(|_| vec![1.0]);
    let f = solve_conditional(&model, &h)?;

    println!("{:>6} {:>22} {:>22}", "seed", "independent (z)", "dependent (z)");
    for seed in 0..5 {
        let a = sample_independent(&family, &y_law, 50_000, Seed(seed))?;
        let b = sample_model(&dependent, 50_000, Seed(seed))?;
        let (va, sa) = empirical_stein(&a, &model, &f)?;
        let (vb, sb) = empirical_stein(&b, &model, &f)?;
        println!("{seed:>6} {va:>12.5} ({:>6.2}) {vb:>12.5} ({:>6.2})", va / sa, vb / sb);
    }
    Ok(())
}
