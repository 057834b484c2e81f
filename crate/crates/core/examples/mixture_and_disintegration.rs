//! Build a conditional model, tabulate its joint law and mixture marginal,
//! then recover the model from the table.

use condstein::measures::{disintegrate, joint_table, mixture_marginal};
use condstein::{ConditionalModel, FiniteLaw, TargetFamily};

fn main() -> condstein::Result<()> {
    let model = ConditionalModel::new(
        FiniteLaw::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.3, 0.2])?,
        vec![
            TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0], vec![0.8, 0.2])?),
            TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 2.0], vec![0.3, 0.4, 0.3])?),
            TargetFamily::finite(FiniteLaw::new(vec![1.0, 2.0, 3.0], vec![0.1, 0.3, 0.6])?),
        ],
    )?;

    let joint = joint_table(&model)?;
    println!("joint table ({} x-values × {} y-values)", joint.x_grid().len(), joint.y_grid().len());
    print!("{:>6}", "x \\ y");
    for y in joint.y_grid() {
        print!("{y:>8}");
    }
    println!();
    for (x, row) in joint.x_grid().iter().zip(joint.mass()) {
        print!("{x:>6}");
        for m in row {
            print!("{m:>8.3}");
        }
        println!();
    }

    let marginal = mixture_marginal(&model)?;
    println!("\nmixture marginal of X:");
    for (x, p) in marginal.support().iter().zip(marginal.weights()) {
        println!("  P(X = {x}) = {p:.3}");
    }
    println!("  E[X] = {:.4}", marginal.mean());

    // division by the column mass can move a weight by an ulp, so compare
    // numerically
    let back = disintegrate(&joint).model;
    let mut worst: f64 = 0.0;
    for (a, b) in back.families().iter().zip(model.families()) {
        if let (TargetFamily::FiniteDiscrete(a), TargetFamily::FiniteDiscrete(b)) = (a, b) {
            assert_eq!(a.support(), b.support());
            for (p, q) in a.weights().iter().zip(b.weights()) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    println!("\ndisintegration: same supports, largest weight difference {worst:.1e}");
    Ok(())
}
