//! Barrier-augmented training of the model and its certificate.
//!
//! The optimized variable `ω` collects the model matrices and the certificate
//! variables `P, L, M, α, σ = s²`. The loss is the batch MSE plus `ν` times a
//! sum of log-det barriers that is finite exactly on the strictly feasible
//! set, so any iterate with a finite loss carries a valid certificate.
//! Gradients are exact: backpropagation through time for the MSE and the
//! identity `d[−log det(−C)] = ⟨(−C)⁻¹, dC⟩` for the barriers.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::certificate::{build_f_unchecked, check_certificate, Certificate};
use crate::dataset::Dataset;
use crate::linalg::{self, Mat, Vector};
use crate::model::{deadzone_slope, simulate, Dimensions, ModelParams, Trajectory};
use crate::rng::{self, streams};
use crate::sdp::{self, ConicSolver, InitObjective};
use crate::{Error, Result, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[value(rename_all = "lowercase")]
pub enum Mode {
    /// Generalized sector conditions: regional certificate with free `L`.
    #[default]
    GenSec,
    /// Standard sector conditions: `L = 0`, global certificate.
    StdSec,
    /// No constraints.
    NoSec,
}

impl Mode {
    pub fn constrained(self) -> bool {
        self != Mode::NoSec
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::GenSec => "gensec",
            Mode::StdSec => "stdsec",
            Mode::NoSec => "nosec",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    /// Trajectories per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative per-epoch learning-rate factor; 1 keeps it constant.
    pub lr_decay: f64,
    /// Floor of the decayed learning rate.
    pub lr_min: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub nu0: f64,
    pub nu_decay: f64,
    pub nu_min: f64,
    /// Input bound; taken from the dataset when absent.
    pub delta: Option<f64>,
    pub check_every: usize,
    pub seed: u64,
    /// Consecutive rollbacks tolerated before the run aborts.
    pub rollback_limit: usize,
    /// Step halvings tried when a proposed update leaves the feasible set.
    pub max_halvings: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::GenSec,
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            lr_min: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            nu0: 1e-3,
            nu_decay: 0.999,
            nu_min: 1e-6,
            delta: None,
            check_every: 1,
            seed: 0,
            rollback_limit: 20,
            max_halvings: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) || !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || !(self.lr_min >= 0.0) {
            return bad("need 0 < lr_decay <= 1 and lr_min >= 0");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.nu0 > 0.0) || !(self.nu_min >= 0.0) || !(self.nu_decay > 0.0 && self.nu_decay <= 1.0) {
            return bad("need nu0 > 0, nu_min >= 0 and 0 < nu_decay <= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.check_every == 0 {
            return bad("check_every must be >= 1");
        }
        if self.delta.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            return bad("delta must be finite and nonnegative");
        }
        Ok(())
    }
}

/// The optimized variable: model matrices plus certificate variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Omega {
    pub params: ModelParams,
    pub p: Mat,
    pub l: Mat,
    /// Diagonal of M.
    pub m: Vector,
    pub alpha: f64,
    /// `s²`.
    pub sigma: f64,
}

impl Omega {
    pub fn new(params: ModelParams, cert: &Certificate) -> Self {
        Omega {
            params,
            p: cert.p.clone(),
            l: cert.l.clone(),
            m: cert.m.clone(),
            alpha: cert.alpha,
            sigma: cert.s * cert.s,
        }
    }

    pub fn dims(&self) -> Dimensions {
        self.params.dims
    }

    pub fn certificate(&self) -> Certificate {
        Certificate {
            p: self.p.clone(),
            m: self.m.clone(),
            l: self.l.clone(),
            s: self.sigma.sqrt(),
            alpha: self.alpha,
        }
    }

    /// All-zero value with the shapes of `dims`; used for gradients.
    pub fn zeros(dims: Dimensions) -> Self {
        Omega {
            params: ModelParams::zeros(dims),
            p: Mat::zeros(dims.n, dims.n),
            l: Mat::zeros(dims.m, dims.n),
            m: Vector::zeros(dims.m),
            alpha: 0.0,
            sigma: 0.0,
        }
    }

    /// Number of free coordinates; `P` contributes its upper triangle.
    pub fn flat_len(dims: Dimensions) -> usize {
        dims.theta_len() + dims.n * (dims.n + 1) / 2 + dims.m * dims.n + dims.m + 2
    }

    /// Flat coordinates: model matrices (row-major, in declaration order),
    /// upper triangle of `P`, `L`, diag `M`, `α`, `σ`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.flatten(1.0)
    }

    /// Flattens a gradient taken with respect to a symmetric `P`: the
    /// coordinate of an off-diagonal pair is the sum of both entries.
    pub fn gradient_to_flat(&self) -> Vec<f64> {
        self.flatten(2.0)
    }

    fn flatten(&self, off_diagonal: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::flat_len(self.dims()));
        for (_, mat) in self.params.matrices() {
            for i in 0..mat.nrows() {
                out.extend(mat.row(i).iter());
            }
        }
        let n = self.p.nrows();
        for i in 0..n {
            out.push(self.p[(i, i)]);
            for j in i + 1..n {
                out.push(off_diagonal * self.p[(i, j)]);
            }
        }
        for i in 0..self.l.nrows() {
            out.extend(self.l.row(i).iter());
        }
        out.extend(self.m.iter());
        out.push(self.alpha);
        out.push(self.sigma);
        out
    }

    pub fn from_flat(dims: Dimensions, flat: &[f64]) -> Result<Self> {
        if flat.len() != Self::flat_len(dims) {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                Self::flat_len(dims)
            )));
        }
        let mut out = Omega::zeros(dims);
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("length checked");
        for mat in out.params.matrices_mut() {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    mat[(i, j)] = next();
                }
            }
        }
        for i in 0..dims.n {
            out.p[(i, i)] = next();
            for j in i + 1..dims.n {
                let v = next();
                out.p[(i, j)] = v;
                out.p[(j, i)] = v;
            }
        }
        for i in 0..dims.m {
            for j in 0..dims.n {
                out.l[(i, j)] = next();
            }
        }
        for i in 0..dims.m {
            out.m[i] = next();
        }
        out.alpha = next();
        out.sigma = next();
        Ok(out)
    }
}

/// `φ(C) = −log det(−C)` for `C ≺ 0`, `+∞` otherwise.
pub fn barrier(c: &Mat) -> f64 {
    match linalg::logdet_pd(&(-c)) {
        Some(ld) => -ld,
        None => f64::INFINITY,
    }
}

fn scalar_barrier(c: f64) -> f64 {
    if c < 0.0 {
        -(-c).ln()
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub barrier: f64,
}

/// `[[1/σ, l_i], [l_iᵀ, P]]`.
fn g_matrix(omega: &Omega, i: usize) -> Mat {
    let n = omega.p.nrows();
    let mut g = Mat::zeros(n + 1, n + 1);
    g[(0, 0)] = 1.0 / omega.sigma;
    for j in 0..n {
        g[(0, j + 1)] = omega.l[(i, j)];
        g[(j + 1, 0)] = omega.l[(i, j)];
    }
    g.view_mut((1, 1), (n, n)).copy_from(&omega.p);
    g
}

/// Sum of every barrier term. With `grad`, adds `scale` times the gradient.
fn barrier_terms(omega: &Omega, delta: f64, mode: Mode, grad: Option<(&mut Omega, f64)>) -> f64 {
    let (alpha, sigma) = (omega.alpha, omega.sigma);
    let scalar = scalar_barrier(alpha - 1.0) + scalar_barrier(-alpha) + scalar_barrier(-sigma);
    if !scalar.is_finite() {
        return f64::INFINITY;
    }
    let slack = (1.0 - alpha * alpha) * sigma - delta * delta;
    let mut total = scalar + scalar_barrier(-slack);
    if !total.is_finite() {
        return f64::INFINITY;
    }

    let cert = omega.certificate();
    let f = build_f_unchecked(&omega.params, &cert);
    let Some(chol_f) = linalg::cholesky(&(-&f)) else {
        return f64::INFINITY;
    };
    total -= 2.0 * chol_f.l_dirty().diagonal().map(f64::ln).sum();

    let m = omega.dims().m;
    let mut g_chols = Vec::with_capacity(m);
    for i in 0..m {
        let Some(chol) = linalg::cholesky(&g_matrix(omega, i)) else {
            return f64::INFINITY;
        };
        total -= 2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
        g_chols.push(chol);
    }

    let Some((g, scale)) = grad else {
        return total;
    };
    let Dimensions { n, r, m, .. } = omega.dims();
    let (o1, o2, o3) = (n, n + r, n + r + m);
    let w = chol_f.inverse();
    let wb = |r0: usize, c0: usize, rows: usize, cols: usize| w.view((r0, c0), (rows, cols)).into_owned();
    let w00 = wb(0, 0, n, n);
    let w20 = wb(o2, 0, m, n);
    let w30 = wb(o3, 0, n, n);
    let w21 = wb(o2, o1, m, r);
    let w31 = wb(o3, o1, n, r);
    let w22 = wb(o2, o2, m, m);
    let w32 = wb(o3, o2, n, m);
    let w33 = wb(o3, o3, n, n);
    let prm = &omega.params;
    let p = &omega.p;
    let a2 = alpha * alpha;

    let mut dp = &w00 * -a2 + w20.transpose() * &prm.c2 * 2.0 + w30.transpose() * &prm.a * 2.0 - &w33;
    let mut dalpha = -2.0 * alpha * (&w00 * p).trace();
    g.params.c2 += &w20 * p * (2.0 * scale);
    g.params.a += &w30 * p * (2.0 * scale);
    g.params.d21 += &w21 * (2.0 * scale);
    g.params.b += &w31 * (2.0 * scale);
    let mm = Mat::from_diagonal(&omega.m);
    g.params.b2 += &w32 * &mm * (2.0 * scale);
    let w23b2 = w32.transpose() * &prm.b2;
    for j in 0..m {
        g.m[j] += scale * (-2.0 * w22[(j, j)] + 2.0 * w23b2[(j, j)]);
    }
    if mode == Mode::GenSec {
        g.l += &w20 * (2.0 * scale);
    }

    let mut dsigma = 0.0;
    for (i, chol) in g_chols.iter().enumerate() {
        let v = chol.inverse();
        dsigma += v[(0, 0)] / (sigma * sigma);
        if mode == Mode::GenSec {
            for j in 0..n {
                g.l[(i, j)] -= scale * 2.0 * v[(0, j + 1)];
            }
        }
        dp -= v.view((1, 1), (n, n));
    }
    dsigma += -(1.0 - a2) / slack - 1.0 / sigma;
    dalpha += 2.0 * alpha * sigma / slack + 1.0 / (1.0 - alpha) - 1.0 / alpha;

    g.p += linalg::symmetrize(&dp) * scale;
    g.alpha += scale * dalpha;
    g.sigma += scale * dsigma;
    total
}

/// MSE of one trajectory over the finite prefix of the prediction. With
/// `grad`, adds `weight` times its gradient with respect to the model.
fn trajectory_mse(params: &ModelParams, traj: &Trajectory, grad: Option<(&mut ModelParams, f64)>) -> Result<f64> {
    let roll = simulate(params, &traj.x0, &traj.u)?;
    let len = roll.y.len();
    if len == 0 {
        return Ok(0.0);
    }
    let mse = roll
        .y
        .iter()
        .zip(&traj.y)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / len as f64;
    if let Some((g, weight)) = grad {
        let mut lam = Vector::zeros(params.dims.n);
        let coef = 2.0 * weight / len as f64;
        for k in (0..len).rev() {
            let (x, u, w, v) = (&roll.x[k], &traj.u[k], &roll.w[k], &roll.v[k]);
            let e = (&roll.y[k] - &traj.y[k]) * coef;
            let mut dv = params.d12.tr_mul(&e) + params.b2.tr_mul(&lam);
            dv.iter_mut().zip(v.iter()).for_each(|(d, vi)| *d *= deadzone_slope(*vi));
            g.a.ger(1.0, &lam, x, 1.0);
            g.b.ger(1.0, &lam, u, 1.0);
            g.b2.ger(1.0, &lam, w, 1.0);
            g.c.ger(1.0, &e, x, 1.0);
            g.d.ger(1.0, &e, u, 1.0);
            g.d12.ger(1.0, &e, w, 1.0);
            g.c2.ger(1.0, &dv, x, 1.0);
            g.d21.ger(1.0, &dv, u, 1.0);
            lam = params.a.tr_mul(&lam) + params.c.tr_mul(&e) + params.c2.tr_mul(&dv);
        }
    }
    Ok(mse)
}

fn loss_impl(
    omega: &Omega,
    batch: &[&Trajectory],
    nu: f64,
    mode: Mode,
    delta: f64,
    mut grad: Option<&mut Omega>,
) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::Config("batch must be nonempty".into()));
    }
    let barrier = if mode.constrained() {
        barrier_terms(omega, delta, mode, grad.as_deref_mut().map(|g| (g, nu)))
    } else {
        0.0
    };
    if !barrier.is_finite() {
        return Ok(LossParts {
            total: f64::INFINITY,
            mse: f64::NAN,
            barrier,
        });
    }
    let weight = 1.0 / batch.len() as f64;
    let mut mse = 0.0;
    for traj in batch {
        mse += trajectory_mse(&omega.params, traj, grad.as_deref_mut().map(|g| (&mut g.params, weight)))?;
    }
    mse *= weight;
    let barrier_part = if mode.constrained() { nu * barrier } else { 0.0 };
    Ok(LossParts {
        total: mse + barrier_part,
        mse,
        barrier,
    })
}

/// Loss `MSE + ν·barrier`. `barrier` in the result is the unweighted sum
/// (always zero without constraints); an infeasible `ω` gives `total = +∞`.
pub fn training_loss(omega: &Omega, batch: &[&Trajectory], nu: f64, mode: Mode, delta: f64) -> Result<LossParts> {
    loss_impl(omega, batch, nu, mode, delta, None)
}

/// Exact gradient of [`training_loss`], shaped like `ω`. `P`'s entry is the
/// symmetrized gradient; `L`'s is zero unless the mode is [`Mode::GenSec`].
pub fn loss_gradient(
    omega: &Omega,
    batch: &[&Trajectory],
    nu: f64,
    mode: Mode,
    delta: f64,
) -> Result<(LossParts, Omega)> {
    let mut grad = Omega::zeros(omega.dims());
    let parts = loss_impl(omega, batch, nu, mode, delta, Some(&mut grad))?;
    if !parts.total.is_finite() {
        return Err(Error::Numerical("gradient requested at a point with infinite loss".into()));
    }
    Ok((parts, grad))
}

/// Adam moment accumulators over the flat coordinates of `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Updates the moments with `grad` and returns the bias-corrected step
    /// to subtract from the parameters.
    pub fn step(&mut self, grad: &[f64], config: &TrainConfig) -> Vec<f64> {
        self.step_with_lr(grad, config, config.learning_rate)
    }

    pub fn step_with_lr(&mut self, grad: &[f64], config: &TrainConfig, lr: f64) -> Vec<f64> {
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                lr * (*m / c1) / ((*v / c2).sqrt() + config.adam_eps)
            })
            .collect()
    }
}

/// Applies one Adam update to `theta` in place.
pub fn adam_step(adam: &mut Adam, theta: &mut [f64], grad: &[f64], config: &TrainConfig) {
    let step = adam.step(grad, config);
    theta.iter_mut().zip(&step).for_each(|(t, s)| *t -= s);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub barrier: f64,
    pub total: f64,
    pub nu: f64,
    pub feasible: bool,
    pub restored: bool,
    pub rolled_back: bool,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub omega: Omega,
    pub adam: Adam,
    pub epoch: usize,
    /// Last `ω` that passed the certificate check.
    pub snapshot: Omega,
    pub history: Vec<EpochRecord>,
    pub nu: f64,
    pub learning_rate: f64,
    pub consecutive_rollbacks: usize,
    pub rollbacks: usize,
    pub restorations: usize,
    /// Updates abandoned after exhausting the step halvings.
    pub failed_updates: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Absent for [`Mode::NoSec`].
    pub certificate: Option<Certificate>,
    pub state: TrainState,
}

/// Starting point for `mode`: the initialization SDP for the constrained
/// modes (with `L` then restored to zero for [`Mode::StdSec`]), and the same
/// model shape with small random perturbations for [`Mode::NoSec`].
pub fn initial_omega(solver: &dyn ConicSolver, dims: Dimensions, delta: f64, mode: Mode, seed: u64) -> Result<Omega> {
    let (mut params, cert) = sdp::initialize(solver, dims, delta, None, seed, InitObjective::Feasibility)?;
    match mode {
        Mode::GenSec => Ok(Omega::new(params, &cert)),
        Mode::StdSec => {
            let cert = sdp::feasibility_restore(solver, &params, cert.s, cert.alpha, delta, true)?;
            Ok(Omega::new(params, &cert))
        }
        Mode::NoSec => {
            let mut r = rng::stream(seed, streams::INIT_PERTURB);
            for mat in params.matrices_mut() {
                for v in mat.iter_mut() {
                    *v += rng::uniform(&mut r, -NOSEC_PERTURBATION, NOSEC_PERTURBATION);
                }
            }
            Ok(Omega::new(params, &cert))
        }
    }
}

/// Half-width of the uniform perturbation of the unconstrained start.
pub const NOSEC_PERTURBATION: f64 = 1e-2;

fn batch_refs<'a>(data: &'a [Trajectory], idx: &[usize]) -> Vec<&'a Trajectory> {
    idx.iter().map(|&i| &data[i]).collect()
}

/// Runs `config.epochs` epochs of shuffled mini-batch Adam from `init`.
///
/// In the constrained modes the certificate is checked at epoch ends; a
/// failing point is repaired by the restoration SDP or, if that fails,
/// rolled back to the last feasible snapshot.
pub fn train(
    data: &[Trajectory],
    delta: f64,
    config: &TrainConfig,
    init: Omega,
    solver: &dyn ConicSolver,
) -> Result<TrainOutput> {
    train_with_callback(data, delta, config, init, solver, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_callback(
    data: &[Trajectory],
    delta: f64,
    config: &TrainConfig,
    init: Omega,
    solver: &dyn ConicSolver,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let dims = init.dims();
    init.params.validate()?;
    init.certificate().validate(dims)?;
    for (i, t) in data.iter().enumerate() {
        if t.x0.len() != dims.n || t.u.iter().any(|u| u.len() != dims.r) || t.y.iter().any(|y| y.len() != dims.e) {
            return Err(Error::Dimension(format!("trajectory {i} does not match model dimensions")));
        }
    }
    let mode = config.mode;
    if mode == Mode::StdSec && init.l.iter().any(|&v| v != 0.0) {
        return Err(Error::Config("stdsec training needs an initial certificate with L = 0".into()));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    if mode.constrained() {
        let start = training_loss(&init, &batch_refs(data, &all), config.nu0, mode, delta)?;
        if !start.total.is_finite() {
            return Err(Error::Config(
                "initial point is infeasible (infinite barrier); re-run initialization".into(),
            ));
        }
    }

    let mut state = TrainState {
        adam: Adam::new(Omega::flat_len(dims)),
        snapshot: init.clone(),
        omega: init,
        epoch: 0,
        history: Vec::with_capacity(config.epochs),
        nu: config.nu0,
        learning_rate: config.learning_rate,
        consecutive_rollbacks: 0,
        rollbacks: 0,
        restorations: 0,
        failed_updates: 0,
    };
    let mut shuffle = rng::stream(config.seed, streams::SHUFFLE);
    let mut order = all;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let (mut mse_acc, mut bar_acc, mut tot_acc, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch = batch_refs(data, chunk);
            let (parts, grad) = loss_gradient(&state.omega, &batch, state.nu, mode, delta)?;
            mse_acc += parts.mse;
            bar_acc += parts.barrier;
            tot_acc += parts.total;
            batches += 1;
            let step = state.adam.step_with_lr(&grad.gradient_to_flat(), config, state.learning_rate);
            let base = state.omega.to_flat();
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=config.max_halvings {
                let proposal: Vec<f64> = base.iter().zip(&step).map(|(b, s)| b - scale * s).collect();
                let candidate = Omega::from_flat(dims, &proposal)?;
                let finite = !mode.constrained() || barrier_terms(&candidate, delta, mode, None).is_finite();
                if finite {
                    accepted = Some(candidate);
                    break;
                }
                scale *= 0.5;
            }
            match accepted {
                Some(next) => state.omega = next,
                None => state.failed_updates += 1,
            }
        }

        let (mut feasible, mut restored, mut rolled_back) = (true, false, false);
        let check_now = mode.constrained() && (epoch % config.check_every == 0 || epoch == config.epochs);
        if check_now {
            let cert = state.omega.certificate();
            feasible = check_certificate(&state.omega.params, &cert, delta)?.passed();
            if feasible {
                state.snapshot = state.omega.clone();
                state.consecutive_rollbacks = 0;
            } else {
                let fix_l = mode == Mode::StdSec;
                match sdp::feasibility_restore(solver, &state.omega.params, cert.s, cert.alpha, delta, fix_l) {
                    Ok(fixed) => {
                        state.omega.p = fixed.p;
                        state.omega.l = fixed.l;
                        state.omega.m = fixed.m;
                        state.snapshot = state.omega.clone();
                        state.consecutive_rollbacks = 0;
                        state.restorations += 1;
                        restored = true;
                    }
                    Err(Error::Infeasible(_) | Error::Numerical(_)) => {
                        state.omega = state.snapshot.clone();
                        state.consecutive_rollbacks += 1;
                        state.rollbacks += 1;
                        rolled_back = true;
                        if state.consecutive_rollbacks > config.rollback_limit {
                            return Err(Error::Infeasible(format!(
                                "{} consecutive rollbacks at epoch {epoch}; the certificate could not be restored",
                                state.consecutive_rollbacks
                            )));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let count = batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            mse: mse_acc / count,
            barrier: bar_acc / count,
            total: tot_acc / count,
            nu: state.nu,
            feasible,
            restored,
            rolled_back,
        };
        on_epoch(&record);
        state.history.push(record);
        state.epoch = epoch;
        state.nu = (state.nu * config.nu_decay).max(config.nu_min);
        state.learning_rate = (state.learning_rate * config.lr_decay).max(config.lr_min);
    }

    if mode.constrained() {
        // The final epoch is always checked, so `omega` is the feasible snapshot.
        debug_assert_eq!(state.omega, state.snapshot);
    }
    let certificate = mode.constrained().then(|| state.omega.certificate());
    Ok(TrainOutput {
        params: state.omega.params.clone(),
        certificate,
        state,
    })
}

/// Contents of a run directory's `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub train: TrainConfig,
    /// SHA-256 of the training trajectories.
    pub dataset_hash: String,
    pub num_trajectories: usize,
    pub solver: String,
    pub solver_settings: sdp::SolverSettings,
    pub init_seed: u64,
}

impl RunConfig {
    pub fn new(
        config: &TrainConfig,
        dataset: &Dataset,
        delta: f64,
        solver: &dyn ConicSolver,
        init_seed: u64,
    ) -> Result<Self> {
        Ok(RunConfig {
            schema_version: SCHEMA_VERSION,
            train: TrainConfig {
                delta: Some(delta),
                ..config.clone()
            },
            dataset_hash: dataset.content_hash()?,
            num_trajectories: dataset.len(),
            solver: solver.name().to_string(),
            solver_settings: solver.settings().clone(),
            init_seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::parse(path, &e))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: cfg.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(cfg)
    }
}

pub fn write_history_csv<W: std::io::Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}

/// Writes `config.json`, `history.csv`, `model.json` and, for the
/// constrained modes, `certificate.json` into `dir`.
pub fn write_run_dir(dir: &Path, run: &RunConfig, output: &TrainOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(run)?).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("history.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_history_csv(&output.state.history, std::io::BufWriter::new(file))?;
    output.params.save(&dir.join("model.json"))?;
    let cert_path = dir.join("certificate.json");
    match &output.certificate {
        Some(cert) => cert.save(&cert_path)?,
        None => {
            if cert_path.exists() {
                std::fs::remove_file(&cert_path).map_err(|e| Error::io(&cert_path, e))?;
            }
        }
    }
    Ok(())
}
