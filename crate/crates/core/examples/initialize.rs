//! Builds feasible starting points for training. Every returned model comes
//! with a certificate, so the barrier loss is finite from the first step.

use lure_sysid::certificate::check_certificate;
use lure_sysid::model::Dimensions;
use lure_sysid::sdp::{self, ClarabelSolver, InitObjective};
use lure_sysid::trainer::{initial_omega, Mode};

pub fn run_example() -> lure_sysid::Result<()> {
    let solver = ClarabelSolver::default();
    let dims = Dimensions::new(2, 1, 1, 2)?;
    for objective in [InitObjective::Feasibility, InitObjective::MaxMargin] {
        for seed in 0..3 {
            let (params, cert) = sdp::initialize(&solver, dims, 1.0, Some(1.0), seed, objective)?;
            let report = check_certificate(&params, &cert, 1.0)?;
            println!(
                "{objective:?} seed {seed}: C2 {:?}, |B| {:.4}, |L| {:.4}, passed {}",
                params.c2.as_slice().iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
                params.b.norm(),
                cert.l.norm(),
                report.passed()
            );
        }
    }

    // Starting points for the benchmark dimensions; stdsec keeps L = 0.
    let dims = Dimensions::new(2, 1, 1, 1)?;
    for mode in [Mode::GenSec, Mode::StdSec] {
        let omega = initial_omega(&solver, dims, 0.36, mode, 0)?;
        println!("{mode}: max|L| = {:.3e}, alpha = {:.3}, s = {:.4}", omega.l.amax(), omega.alpha, omega.sigma.sqrt());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
