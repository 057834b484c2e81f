//! Solve N f = h − E h for an indicator source and check the residual.

use condstein::equation::{check_grid, residual, solve, Source};
use condstein::TargetFamily;

fn main() -> condstein::Result<()> {
    let h = Source::step(0.0);
    let gauss = TargetFamily::gaussian(0.0, 1.0)?;
    let sol = solve(&gauss, &h)?;
    println!("{gauss}, h = {}", h.label());
    println!("  E h = {:.6}", sol.centered_mean);
    for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("  f({x:>4}) = {:.10}", sol.f.eval(x));
    }
    println!("  f(0) vs √(2π)/4: {:.2e}", (sol.f.eval(0.0) - (2.0 * std::f64::consts::PI).sqrt() / 4.0).abs());

    for fam in [TargetFamily::poisson(2.0)?, TargetFamily::gamma(3.0, 1.5)?] {
        let h = Source::interval(1.0, 3.0);
        let sol = solve(&fam, &h)?;
        let grid = check_grid(&fam);
        println!("{fam}, h = {}: max residual {:.2e} over {} points", h.label(), residual(&fam, &sol, &grid)?, grid.len());
    }
    Ok(())
}
