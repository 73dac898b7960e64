//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::time::{Duration, Instant};

use lure_sysid::certificate::{check_certificate, g_is_psd, iss_bound, Certificate};
use lure_sysid::cli::evaluate;
use lure_sysid::dataset::{self, generate, true_system, GenConfig};
use lure_sysid::linalg::{self, Mat, Vector};
use lure_sysid::model::{simulate, Dimensions, Trajectory};
use lure_sysid::rng::{self, stream};
use lure_sysid::sdp::{self, ClarabelSolver, InitObjective};
use lure_sysid::sector::{gamma, SectorData};
use lure_sysid::trainer::{self, initial_omega, loss_gradient, training_loss, Mode, Omega, TrainConfig};

type Outcome = Result<(bool, String), lure_sysid::Error>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

const SEED: u64 = 0xACCE;

fn random_mat(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng::uniform(r, -scale, scale))
}

fn sector_inequality() -> Outcome {
    let mut r = stream(SEED, 1);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let m = 1 + (rng::uniform(&mut r, 0.0, 4.0) as usize).min(3);
        let n = 1 + (rng::uniform(&mut r, 0.0, 4.0) as usize).min(3);
        let lambda = Vector::from_fn(m, |_, _| rng::uniform(&mut r, 0.01, 10.0));
        let h = random_mat(&mut r, m, n, 2.0);
        let mut x = Vector::from_fn(n, |_, _| rng::uniform(&mut r, -5.0, 5.0));
        let reach = (&h * &x).amax();
        if reach > 0.0 {
            x *= rng::uniform(&mut r, 0.0, 1.0) / reach;
        }
        let v = Vector::from_fn(m, |_, _| rng::uniform(&mut r, -6.0, 6.0));
        let g = gamma(&v, &x, &SectorData::new(lambda, h)?);
        worst = worst.min(g);
    }
    Ok((worst >= -1e-12, format!("10000 instances, min gamma {worst:e}")))
}

/// Region-maximizing certificate of the benchmark system and the largest
/// input bound it admits, `sqrt(1-α²)·s`.
fn benchmark_certificate() -> Result<(Certificate, f64), lure_sysid::Error> {
    let cert = sdp::post_process(&ClarabelSolver::default(), &true_system(), 0.97, 0.0)?;
    let delta = check_certificate(&true_system(), &cert, 0.0)?.delta_max;
    Ok((cert, delta))
}

fn true_system_certificate() -> Outcome {
    let (cert, delta_max) = benchmark_certificate()?;
    let report = check_certificate(&true_system(), &cert, 0.0)?;
    let l_max = cert.l.amax();
    Ok((
        report.passed() && l_max > 1e-6,
        format!(
            "s {:.6}, admissible delta {delta_max:.6}, max|L| {l_max:.4}, failures {:?}",
            cert.s,
            report.failures()
        ),
    ))
}

fn forward_invariance() -> Outcome {
    let (cert, delta) = benchmark_certificate()?;
    let params = true_system();
    let p_inv = linalg::inverse_pd(&cert.p).ok_or_else(|| lure_sysid::Error::Singular("P".into()))?;
    let region = p_inv / (cert.s * cert.s);
    // x = s P^{1/2} z maps the unit ball onto E(P⁻¹/s²).
    let root = &cert.p * linalg::inv_sqrt_spd(&cert.p)? * cert.s;
    let mut r = stream(SEED, 3);
    let (mut exits, mut bound_violations, mut worst) = (0usize, 0usize, 0.0f64);
    for i in 0..1000 {
        let z = loop {
            let z = Vector::from_fn(2, |_, _| rng::uniform(&mut r, -1.0, 1.0));
            if z.norm() <= 1.0 && z.norm() > 0.0 {
                break z;
            }
        };
        let z = if i % 2 == 0 { z.normalize() } else { z };
        let x0 = &root * z;
        let u: Vec<Vector> = (0..200)
            .map(|_| {
                let a = rng::uniform(&mut r, -1.0, 1.0);
                let a = if i % 3 == 0 { a.signum() } else { a };
                Vector::from_element(1, a * delta)
            })
            .collect();
        let roll = simulate(&params, &x0, &u)?;
        let mut u_sup = 0.0f64;
        for (k, x) in roll.x.iter().enumerate() {
            let level = (x.transpose() * &region * x)[(0, 0)];
            worst = worst.max(level);
            if level > 1.0 + 1e-9 {
                exits += 1;
            }
            if x.norm() > iss_bound(&cert, x0.norm(), u_sup, k)? + 1e-9 {
                bound_violations += 1;
            }
            if let Some(uk) = u.get(k) {
                u_sup = u_sup.max(uk.norm());
            }
        }
    }
    Ok((
        exits == 0 && bound_violations == 0,
        format!("1000 rollouts of 200 steps, exits {exits}, bound violations {bound_violations}, max level {worst:.12}"),
    ))
}

fn gradient_check() -> Outcome {
    let solver = ClarabelSolver::default();
    let ds = generate(&GenConfig::desk(4), &solver)?;
    let delta = ds.delta();
    let dims = ds.meta.dims;
    let divergent = ds.trajectories.iter().position(|t| t.diverged).unwrap_or(0);
    let batch: Vec<&Trajectory> = [divergent, 1, 2, 3].iter().map(|&i| &ds.trajectories[i]).collect();
    let nu = 1e-2;
    let (mut checked, mut failed, mut worst) = (0usize, 0usize, 0.0f64);
    for point in 0..20u64 {
        let mut o = initial_omega(&solver, dims, delta, Mode::GenSec, point)?;
        let mut r = stream(SEED, 400 + point);
        for mat in o.params.matrices_mut() {
            for v in mat.iter_mut() {
                *v += rng::uniform(&mut r, -1e-2, 1e-2);
            }
        }
        if !training_loss(&o, &batch, nu, Mode::GenSec, delta)?.total.is_finite() {
            o = initial_omega(&solver, dims, delta, Mode::GenSec, point)?;
        }
        let (_, g) = loss_gradient(&o, &batch, nu, Mode::GenSec, delta)?;
        let flat = o.to_flat();
        let analytic = g.gradient_to_flat();
        let eval = |j: usize, d: f64| -> Result<f64, lure_sysid::Error> {
            let mut f = flat.clone();
            f[j] += d;
            Ok(training_loss(&Omega::from_flat(dims, &f)?, &batch, nu, Mode::GenSec, delta)?.total)
        };
        for (j, &a) in analytic.iter().enumerate() {
            // Central differences at h and h/2 combined to cancel the h² term,
            // keeping the step whose two estimates agree best once roundoff
            // of order ε|f|/h is accounted for.
            let f0 = eval(j, 0.0)?.abs();
            let mut fd = f64::NAN;
            let mut spread = f64::INFINITY;
            for h in [1e-4, 1e-5, 1e-6, 1e-7] {
                let d1 = (eval(j, h)? - eval(j, -h)?) / (2.0 * h);
                let d2 = (eval(j, h / 2.0)? - eval(j, -h / 2.0)?) / h;
                let estimate = (d1 - d2).abs() + f64::EPSILON * f0 / h;
                if estimate < spread {
                    spread = estimate;
                    fd = (4.0 * d2 - d1) / 3.0;
                }
            }
            let err = (a - fd).abs();
            let tol = if a.abs() < 1e-8 { 1e-8 } else { 1e-5 * a.abs() };
            worst = worst.max(err / tol);
            checked += 1;
            if err > tol {
                failed += 1;
            }
        }
    }
    Ok((
        failed == 0,
        format!("20 points, {checked} coordinates, {failed} out of tolerance, worst err/tol {worst:.3}"),
    ))
}

fn initialization() -> Outcome {
    let solver = ClarabelSolver::default();
    let dims = Dimensions::new(2, 1, 1, 2)?;
    let probe = Trajectory {
        x0: Vector::zeros(2),
        u: vec![Vector::zeros(1); 5],
        y: vec![Vector::zeros(1); 5],
        diverged: false,
    };
    let mut ok = 0;
    for seed in 0..10 {
        let Ok((params, cert)) = sdp::initialize(&solver, dims, 1.0, Some(1.0), seed, InitObjective::Feasibility) else {
            continue;
        };
        let passed = check_certificate(&params, &cert, 1.0)?.passed();
        let loss = training_loss(&Omega::new(params, &cert), &[&probe], 1e-3, Mode::GenSec, 1.0)?;
        ok += usize::from(passed && loss.total.is_finite());
    }
    Ok((ok == 10, format!("{ok}/10 seeds feasible with finite barrier")))
}

fn end_to_end() -> Outcome {
    let solver = ClarabelSolver::default();
    let cfg = GenConfig::desk(1);
    let train = generate(&cfg, &solver)?;
    let test = generate(
        &GenConfig {
            s_true: train.meta.config.s_true,
            ..cfg.test_split()
        },
        &solver,
    )?;
    let delta = train.delta();
    let all: Vec<Trajectory> = train.trajectories.iter().chain(&test.trajectories).cloned().collect();
    let mut results = Vec::new();
    for mode in [Mode::GenSec, Mode::StdSec, Mode::NoSec] {
        let config = TrainConfig { mode, ..TrainConfig::default() };
        let init = initial_omega(&solver, train.meta.dims, delta, mode, config.seed)?;
        let out = trainer::train(&train.trajectories, delta, &config, init, &solver)?;
        let (on_test, _) = evaluate(mode.name(), &out.params, out.certificate.as_ref(), &test.trajectories, delta)?;
        let (on_all, _) = evaluate(mode.name(), &out.params, out.certificate.as_ref(), &all, delta)?;
        results.push((mode, out, on_test, on_all));
    }
    let (_, gensec, gen_test, _) = &results[0];
    let (_, _, std_test, std_all) = &results[1];
    let (_, _, no_test, _) = &results[2];
    let a = match &gensec.certificate {
        Some(c) => check_certificate(&gensec.params, c, delta)?.passed(),
        None => false,
    };
    let b = gen_test.nrmse < 0.05;
    let c = gen_test.nrmse < std_test.nrmse;
    let d = std_all.consistency.pred_diverged == 0 && std_all.consistency.truth_diverged > 0;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    Ok((
        a && b && c && d,
        format!(
            "(a) certificate {} (b) gensec NRMSE {:.4} < 0.05 {} (c) < stdsec {:.4} {} (d) stdsec predicts {}/{} divergent {}; nosec {:.4}",
            mark(a),
            gen_test.nrmse,
            mark(b),
            std_test.nrmse,
            mark(c),
            std_all.consistency.pred_diverged,
            std_all.consistency.truth_diverged,
            mark(d),
            no_test.nrmse
        ),
    ))
}

fn full_scale_shape() -> Outcome {
    let ds = generate(&GenConfig::default(), &ClarabelSolver::default())?;
    let recomputed = dataset::max_abs_input(&ds.trajectories);
    let ok = ds.len() == 900 && ds.num_points() == 45_000 && ds.delta() == recomputed;
    Ok((
        ok,
        format!("{} trajectories, {} points, delta {} (max|u| {recomputed})", ds.len(), ds.num_points(), ds.delta()),
    ))
}

fn global_limit() -> Outcome {
    let solver = ClarabelSolver::default();
    let dims = Dimensions::new(2, 1, 1, 1)?;
    let delta = 0.3;
    let omega = initial_omega(&solver, dims, delta, Mode::StdSec, 3)?;
    let mut cert = omega.certificate();
    cert.l.fill(0.0);
    let mut ok = check_certificate(&omega.params, &cert, delta)?.passed();
    for _ in 0..10 {
        cert.s *= 2.0;
        ok &= check_certificate(&omega.params, &cert, delta)?.passed();
    }
    Ok((ok, format!("feasible through s = {:.4e}", cert.s)))
}

fn schur_equivalence() -> Outcome {
    let mut r = stream(SEED, 9);
    let (mut disagreements, mut ambiguous) = (0usize, 0usize);
    for _ in 0..1000 {
        let n = 1 + (rng::uniform(&mut r, 0.0, 4.0) as usize).min(3);
        let a = random_mat(&mut r, n, n, 1.0);
        let p = &a * a.transpose() + Mat::identity(n, n) * 0.05;
        let l = random_mat(&mut r, 1, n, 1.0);
        let p_inv = linalg::inverse_pd(&p).ok_or_else(|| lure_sysid::Error::Singular("P".into()))?;
        let q = (&l * &p_inv * l.transpose())[(0, 0)];
        let ratio = rng::uniform(&mut r, 0.5, 1.5);
        let s = (ratio / q).sqrt();
        let scalar = q <= 1.0 / (s * s);
        if (q - 1.0 / (s * s)).abs() < 1e-9 {
            ambiguous += 1;
            continue;
        }
        let cert = Certificate {
            p,
            m: Vector::repeat(1, 1.0),
            l,
            s,
            alpha: 0.5,
        };
        if g_is_psd(&cert, 0)? != scalar {
            disagreements += 1;
        }
    }
    Ok((
        disagreements == 0,
        format!("1000 instances, {disagreements} disagreements, {ambiguous} within the 1e-9 gap"),
    ))
}

fn main() {
    let criteria = [
        Criterion { name: "sector inequality on L(H)", limit: Some(Duration::from_secs(5)), run: sector_inequality },
        Criterion { name: "true system certificate", limit: Some(Duration::from_secs(30)), run: true_system_certificate },
        Criterion { name: "forward invariance", limit: Some(Duration::from_secs(30)), run: forward_invariance },
        Criterion { name: "gradient vs finite differences", limit: None, run: gradient_check },
        Criterion { name: "initialization feasibility", limit: Some(Duration::from_secs(60)), run: initialization },
        Criterion { name: "desk-scale end to end", limit: Some(Duration::from_secs(20 * 60)), run: end_to_end },
        Criterion { name: "full-scale dataset shape", limit: None, run: full_scale_shape },
        Criterion { name: "global limit with L = 0", limit: None, run: global_limit },
        Criterion { name: "Schur complement equivalence", limit: None, run: schur_equivalence },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, c) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match (c.run)() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let pass = ok && in_time;
        failures += usize::from(!pass);
        let limit = c.limit.map_or(String::new(), |l| format!(" / limit {} s", l.as_secs()));
        println!(
            "{} [{}] {}: {detail} ({:.2} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
