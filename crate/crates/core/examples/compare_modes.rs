//! Trains the constrained, globally constrained and unconstrained variants
//! on the same data and compares error, certificates and predicted
//! divergence. Divergence is counted over training and test trajectories
//! together, since the small test split may contain no divergent truth.

use lure_sysid::cli::evaluate;
use lure_sysid::dataset::{generate, GenConfig};
use lure_sysid::model::Trajectory;
use lure_sysid::sdp::ClarabelSolver;
use lure_sysid::trainer::{initial_omega, train, Mode, TrainConfig};

pub fn run(epochs: usize) -> lure_sysid::Result<()> {
    let solver = ClarabelSolver::default();
    let gen = GenConfig::desk(1);
    let data = generate(&gen, &solver)?;
    let test = generate(
        &GenConfig {
            s_true: data.meta.config.s_true,
            ..gen.test_split()
        },
        &solver,
    )?;
    let delta = data.delta();
    let all: Vec<Trajectory> = data.trajectories.iter().chain(&test.trajectories).cloned().collect();

    println!("{:<8} {:>10} {:>11} {:>16}", "mode", "test NRMSE", "certificate", "pred/true div.");
    for mode in [Mode::NoSec, Mode::StdSec, Mode::GenSec] {
        let config = TrainConfig {
            mode,
            epochs,
            ..TrainConfig::default()
        };
        let init = initial_omega(&solver, data.meta.dims, delta, mode, config.seed)?;
        let out = train(&data.trajectories, delta, &config, init, &solver)?;
        let cert = out.certificate.as_ref();
        let (on_test, _) = evaluate(mode.name(), &out.params, cert, &test.trajectories, delta)?;
        let (on_all, _) = evaluate(mode.name(), &out.params, cert, &all, delta)?;
        let c = on_all.consistency;
        println!(
            "{:<8} {:>10.4} {:>11} {:>16}",
            mode.name(),
            on_test.nrmse,
            on_test.certificate,
            format!("{}/{}", c.pred_diverged, c.truth_diverged)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    run(epochs)
}
