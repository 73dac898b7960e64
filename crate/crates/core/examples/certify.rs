//! Certifies the benchmark system: maximizes the invariant ellipsoid for a
//! contraction rate, checks the certificate independently and evaluates the
//! input-to-state bound.

use lure_sysid::certificate::{check_certificate, iss_bound};
use lure_sysid::dataset::true_system;
use lure_sysid::sdp::{self, ClarabelSolver};
use lure_sysid::sector::Ellipsoid;

pub fn run_example() -> lure_sysid::Result<()> {
    let params = true_system();
    let solver = ClarabelSolver::default();
    for alpha in [0.97, 0.98, 0.99] {
        let cert = sdp::post_process(&solver, &params, alpha, 0.0)?;
        let report = check_certificate(&params, &cert, 0.0)?;
        let axes = Ellipsoid::new(report.region.clone().expect("P is positive definite"))?.semi_axes();
        println!(
            "alpha {alpha}: s = {:.4}, admissible |u| <= {:.4}, semi-axes {:.3} x {:.3}, passed {}",
            cert.s,
            report.delta_max,
            axes[0],
            axes[1],
            report.passed()
        );
        println!("  H = L P^-1 = {:?}", report.h.as_ref().map(|h| h.as_slice().to_vec()));
    }

    let cert = sdp::post_process(&solver, &params, 0.97, 0.2)?;
    for k in [0, 10, 50, 200] {
        println!("bound on |x_{k}| from |x0| = 1, sup|u| = 0.2: {:.4}", iss_bound(&cert, 1.0, 0.2, k)?);
    }

    // The certificate travels as JSON.
    let text = cert.to_json()?;
    println!("certificate.json is {} bytes", text.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
