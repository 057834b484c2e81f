//! Decide whether a finite joint table equals the model's joint law using
//! indicator test functions only.

use condstein::measures::joint_table;
use condstein::oracle::{characterize_finite, conditional_expectation_check, tv_exact};
use condstein::sim::{perturb, Perturbation};
use condstein::validate::characterization_case;
use condstein::{BivariateTestFunction, ConditionalModel, FiniteLaw, TargetFamily, TestFunction};

fn main() -> condstein::Result<()> {
    let model = ConditionalModel::new(
        FiniteLaw::new(vec![0.0, 1.0], vec![0.3, 0.7])?,
        vec![
            TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 2.0], vec![0.2, 0.5, 0.3])?),
            TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.25, 0.25])?),
        ],
    )?;
    let target = joint_table(&model)?;
    let candidates = [
        ("model itself", model.clone()),
        ("swapped", perturb(&model, &Perturbation::SwapConditionals(0.0, 1.0))?),
        ("1% contaminated", perturb(&model, &Perturbation::Contaminate { eps: 0.01, noise: FiniteLaw::point(1.0)? })?),
    ];
    for (name, m) in &candidates {
        let joint = joint_table(m)?;
        println!(
            "{name:<16} characterized: {:<5}  tv to model: {:.4}",
            characterize_finite(&joint, &model)?,
            tv_exact(&joint, &target)
        );
    }

    // per-slice values show which conditional is off
    let joint = joint_table(&candidates[2].1)?;
    let f = BivariateTestFunction::Uniform(TestFunction::indicator_at(1.0));
    for (y, v) in conditional_expectation_check(&joint, &model, &f)? {
        println!("  slice y = {y}: E[N f | Y = y] = {v:+.5}");
    }

    let mut agree = 0;
    let total = 50;
    for i in 0..total {
        let (joint, m, truth) = characterization_case(3, (4, 3), i);
        agree += usize::from(characterize_finite(&joint, &m)? == truth);
    }
    println!("random cases decided correctly: {agree}/{total}");
    Ok(())
}
