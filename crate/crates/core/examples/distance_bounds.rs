//! Total-variation and Wasserstein bounds for a perturbed model, next to the
//! exact distances from the oracle.

use condstein::discrepancy::{tv_bound, w_bound, Observed};
use condstein::measures::joint_table;
use condstein::oracle::{tv_exact, wasserstein_exact};
use condstein::sim::{perturb, Perturbation};
use condstein::{ConditionalModel, FiniteLaw, TargetFamily};

fn main() -> condstein::Result<()> {
    let model = ConditionalModel::new(
        FiniteLaw::uniform(vec![0.0, 1.0, 2.0])?,
        vec![
            TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 2.0], vec![0.6, 0.3, 0.1])?),
            TargetFamily::finite(FiniteLaw::uniform(vec![0.0, 1.0, 2.0])?),
            TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 2.0], vec![0.1, 0.3, 0.6])?),
        ],
    )?;
    let target = joint_table(&model)?;
    let noise = FiniteLaw::point(2.0)?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "eps", "tv bound", "tv exact", "w bound", "w exact");
    for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let joint = joint_table(&perturb(&model, &Perturbation::Contaminate { eps, noise: noise.clone() })?)?;
        let tv = tv_bound(Observed::Exact(&joint), &model)?;
        let w = w_bound(Observed::Exact(&joint), &model)?;
        println!(
            "{eps:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            tv.sup_value,
            tv_exact(&joint, &target),
            w.sup_value,
            wasserstein_exact(&joint, &target)?
        );
    }
    println!("the W column is a lower estimate: its dictionary is a finite subset of 1-Lipschitz functions");
    Ok(())
}
