//! Monte Carlo check of a certificate: trajectories started in the certified
//! ellipsoid and driven by admissible inputs never leave it.

use lure_sysid::certificate::{check_certificate, iss_bound};
use lure_sysid::dataset::true_system;
use lure_sysid::linalg::{self, Vector};
use lure_sysid::rng;
use lure_sysid::sdp::{self, ClarabelSolver};

pub fn run_example() -> lure_sysid::Result<()> {
    let params = true_system();
    let cert = sdp::post_process(&ClarabelSolver::default(), &params, 0.97, 0.0)?;
    let report = check_certificate(&params, &cert, 0.0)?;
    let region = report.region.expect("P is positive definite");
    let delta = report.delta_max;
    // Points s P^{1/2} z with |z| = 1 lie on the boundary of E(P⁻¹/s²).
    let root = &cert.p * linalg::inv_sqrt_spd(&cert.p)? * cert.s;

    let mut r = rng::stream(5, 0);
    let (mut worst_level, mut worst_ratio) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let angle = rng::uniform(&mut r, 0.0, std::f64::consts::TAU);
        let x0 = &root * Vector::from_row_slice(&[angle.cos(), angle.sin()]);
        let u: Vec<Vector> = (0..100)
            .map(|_| Vector::from_element(1, delta * rng::uniform(&mut r, -1.0, 1.0).signum()))
            .collect();
        let roll = lure_sysid::model::simulate(&params, &x0, &u)?;
        for (k, x) in roll.x.iter().enumerate() {
            worst_level = worst_level.max((x.transpose() * &region * x)[(0, 0)]);
            let u_sup = if k == 0 { 0.0 } else { delta };
            worst_ratio = worst_ratio.max(x.norm() / iss_bound(&cert, x0.norm(), u_sup, k)?);
        }
    }
    println!("inputs bounded by {delta:.4}");
    println!("largest x' P^-1 x / s^2 along 200 rollouts: {worst_level:.9}");
    println!("largest |x_k| / bound: {worst_ratio:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
