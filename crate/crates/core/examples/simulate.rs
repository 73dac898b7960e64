//! Simulates the benchmark Lur'e system from a few initial states and shows
//! how the divergence flag and the error metrics behave.

use lure_sysid::dataset::true_system;
use lure_sysid::linalg::Vector;
use lure_sysid::model::{deadzone, nrmse, simulate, DEFAULT_DIVERGENCE_FLOOR};

pub fn run_example() -> lure_sysid::Result<()> {
    let params = true_system();
    println!("dzn(-2.5) = {}, dzn(0.4) = {}, dzn(3) = {}", deadzone(-2.5), deadzone(0.4), deadzone(3.0));

    let u = vec![Vector::zeros(1); 50];
    for x0 in [[0.5, -0.5], [2.0, 1.0], [6.0, 6.0]] {
        let x0 = Vector::from_row_slice(&x0);
        let roll = simulate(&params, &x0, &u)?;
        let last = roll.x.last().expect("non-empty rollout");
        println!(
            "x0 = ({:>4}, {:>4})  |x_50| = {:>10.4e}  divergent: {}",
            x0[0],
            x0[1],
            last.norm(),
            roll.is_divergent(DEFAULT_DIVERGENCE_FLOOR)
        );
    }

    // A slightly perturbed model, scored against the true outputs.
    let mut model = params.clone();
    model.a[(0, 0)] += 0.01;
    let x0 = Vector::from_row_slice(&[1.0, -1.0]);
    let u: Vec<Vector> = (0..50).map(|k| Vector::from_element(1, 0.3 * (0.1 * k as f64).sin())).collect();
    let truth = simulate(&params, &x0, &u)?;
    let pred = simulate(&model, &x0, &u)?;
    println!("NRMSE of the perturbed model: {:.5}", nrmse(&pred.y, &truth.y)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
