//! Trains a model under the generalized sector constraints and reports its
//! certified region and test error.
//!
//! ```text
//! cargo run --release --example train -- 500
//! ```

use lure_sysid::certificate::check_certificate;
use lure_sysid::cli::evaluate;
use lure_sysid::dataset::{generate, GenConfig};
use lure_sysid::sdp::ClarabelSolver;
use lure_sysid::trainer::{initial_omega, train_with_callback, Mode, TrainConfig};

pub fn run(epochs: usize) -> lure_sysid::Result<()> {
    let solver = ClarabelSolver::default();
    let gen = GenConfig::desk(1);
    let train = generate(&gen, &solver)?;
    let test = generate(
        &GenConfig {
            s_true: train.meta.config.s_true,
            ..gen.test_split()
        },
        &solver,
    )?;
    let delta = train.delta();

    let config = TrainConfig {
        mode: Mode::GenSec,
        epochs,
        ..TrainConfig::default()
    };
    let init = initial_omega(&solver, train.meta.dims, delta, config.mode, config.seed)?;
    let every = (epochs / 10).max(1);
    let out = train_with_callback(&train.trajectories, delta, &config, init, &solver, |rec| {
        if rec.epoch % every == 0 {
            println!(
                "epoch {:>4}  mse {:>10.5}  barrier {:>9.3}  nu {:.2e}{}",
                rec.epoch,
                rec.mse,
                rec.barrier,
                rec.nu,
                if rec.restored { "  restored" } else { "" }
            );
        }
    })?;

    let cert = out.certificate.as_ref().expect("gensec returns a certificate");
    let report = check_certificate(&out.params, cert, delta)?;
    println!("certificate passed: {}, s = {:.4}, alpha = {:.4}", report.passed(), cert.s, cert.alpha);
    let (eval, _) = evaluate("gensec", &out.params, Some(cert), &test.trajectories, delta)?;
    println!("test NRMSE {:.4}", eval.nrmse);
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    run(epochs)
}
