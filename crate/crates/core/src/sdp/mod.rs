//! Semidefinite programs around the certificate LMIs.
//!
//! - [`feasibility_restore`]: with `θ, s, α` fixed, find `P, L, M`.
//! - [`initialize`]: build a feasible starting model and certificate.
//! - [`post_process`]: with `θ, α` fixed, maximize the region scale `s`.
//!
//! All three are posed on [`problem::SdpProblem`] and handed to a
//! [`ConicSolver`]; every returned certificate is re-verified with
//! [`check_certificate`] before it leaves this module.

pub mod clarabel;
pub mod problem;

use serde::{Deserialize, Serialize};

use crate::certificate::{check_certificate, Certificate};
use crate::linalg::Mat;
use crate::model::{Dimensions, ModelParams};
use crate::rng::{self, streams};
use crate::{Error, Result};

pub use self::clarabel::ClarabelSolver;
use self::problem::{Affine, SdpProblem, VarKind};

/// Contraction rate used by [`initialize`].
pub const INIT_ALPHA: f64 = 0.99;
/// `A` used by [`initialize`] is `INIT_A_SCALE · I`.
pub const INIT_A_SCALE: f64 = 0.9;
/// Relative inflation of the initial `s` so the input-bound barrier is finite.
pub const INIT_S_INFLATION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: u32,
    /// Strictness margin: LMIs are posed as `−F ⪰ margin·I`, `G_i ⪰ margin·I`.
    pub margin: f64,
    /// Upper limit on `s` in [`post_process`]; reached only when nothing
    /// else bounds the region (e.g. `L = 0` is feasible). `1/s_max²` must
    /// stay well above `margin`, which also bounds `1/s²` from below.
    pub s_max: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            max_iter: 100_000,
            margin: 1e-8,
            s_max: 1e3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub solver_status: String,
    /// Present iff `status` is optimal.
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solve_seconds: f64,
}

pub trait ConicSolver {
    fn name(&self) -> &'static str;
    fn settings(&self) -> &SolverSettings;
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution>;
}

/// What to optimize when [`initialize`] only needs a feasible point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitObjective {
    #[default]
    Feasibility,
    /// Maximize `t ≤ 1` with `−F ⪰ t·I`.
    MaxMargin,
}

struct FParts<'a> {
    dims: Dimensions,
    alpha: f64,
    a: &'a Mat,
    b2: &'a Mat,
    c2: &'a Mat,
    p: Affine,
    l: Affine,
    m: Affine,
    b: Affine,
    d21: Affine,
}

/// `F` as an affine expression in whichever parts are variables.
fn f_expr(parts: &FParts) -> Affine {
    let Dimensions { n, r, m, .. } = parts.dims;
    let p = &parts.p;
    Affine::symmetric_blocks(
        &[n, r, m, n],
        &[
            vec![
                Some(p.scale(-parts.alpha * parts.alpha)),
                None,
                Some(p.right_mul(&parts.c2.transpose()).add(&parts.l.transpose())),
                Some(p.right_mul(&parts.a.transpose())),
            ],
            vec![
                None,
                Some(Affine::constant(-Mat::identity(r, r))),
                Some(parts.d21.transpose()),
                Some(parts.b.transpose()),
            ],
            vec![
                None,
                None,
                Some(parts.m.scale(-2.0)),
                Some(parts.m.right_mul(&parts.b2.transpose())),
            ],
            vec![None, None, None, Some(p.scale(-1.0))],
        ],
    )
}

fn neg_f_lmi(problem: &mut SdpProblem, parts: &FParts, margin: f64) -> Result<()> {
    let f = f_expr(parts);
    let k = f.shape().0;
    problem.add_lmi("-F >= margin I", f.scale(-1.0).add_constant(&(-Mat::identity(k, k) * margin)))
}

/// Adds `[[corner, l_i], [l_iᵀ, P]] ⪰ margin·I` for every channel.
fn g_lmis(problem: &mut SdpProblem, corner: &Affine, l: &Affine, p: &Affine, margin: f64) -> Result<()> {
    let (m, n) = l.shape();
    for i in 0..m {
        let mut sel = Mat::zeros(1, m);
        sel[(0, i)] = 1.0;
        let li = l.left_mul(&sel);
        let g = Affine::symmetric_blocks(&[1, n], &[vec![Some(corner.clone()), Some(li)], vec![None, Some(p.clone())]]);
        let name = format!("G_{} >= margin I", i + 1);
        problem.add_lmi(&name, g.add_constant(&(-Mat::identity(n + 1, n + 1) * margin)))?;
    }
    Ok(())
}

fn require_optimal(sol: &SdpSolution, what: &str) -> Result<Vec<f64>> {
    match sol.status {
        SdpStatus::Optimal => Ok(sol.x.clone().expect("optimal solutions carry values")),
        SdpStatus::Infeasible => Err(Error::Infeasible(format!("{what}: solver reports {}", sol.solver_status))),
        SdpStatus::NumericalFailure => Err(Error::Numerical(format!(
            "{what}: solver stopped with {} after {} iterations",
            sol.solver_status, sol.iterations
        ))),
    }
}

fn verified(params: &ModelParams, cert: Certificate, delta: f64, what: &str) -> Result<Certificate> {
    let report = check_certificate(params, &cert, delta)?;
    if !report.passed() {
        return Err(Error::Numerical(format!(
            "{what}: solver point fails verification ({})",
            report.failures().join(", ")
        )));
    }
    Ok(cert)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// With `θ, s, α` fixed, searches `P, L, M` satisfying every certificate
/// condition. `fix_l_zero` restricts the search to `L = 0`.
pub fn feasibility_restore(
    solver: &dyn ConicSolver,
    params: &ModelParams,
    s: f64,
    alpha: f64,
    delta: f64,
    fix_l_zero: bool,
) -> Result<Certificate> {
    params.validate()?;
    check_alpha(alpha)?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Config(format!("s must be positive and finite, got {s}")));
    }
    if delta * delta > (1.0 - alpha * alpha) * s * s {
        return Err(Error::Infeasible(format!(
            "delta = {delta} exceeds sqrt(1 - alpha^2) s = {}",
            (1.0 - alpha * alpha).sqrt() * s
        )));
    }
    let Dimensions { n, m, .. } = params.dims;
    let margin = solver.settings().margin;
    let mut prob = SdpProblem::new();
    let p = prob.add_var("P", VarKind::Symmetric { n });
    let mm = prob.add_var("M", VarKind::Diagonal { n: m });
    let l = (!fix_l_zero).then(|| prob.add_var("L", VarKind::Full { rows: m, cols: n }));
    let l_expr = l.map_or_else(|| Affine::zeros(m, n), |id| prob.expr(id));
    let parts = FParts {
        dims: params.dims,
        alpha,
        a: &params.a,
        b2: &params.b2,
        c2: &params.c2,
        p: prob.expr(p),
        l: l_expr.clone(),
        m: prob.expr(mm),
        b: Affine::constant(params.b.clone()),
        d21: Affine::constant(params.d21.clone()),
    };
    neg_f_lmi(&mut prob, &parts, margin)?;
    let corner = Affine::constant(Mat::from_element(1, 1, 1.0 / (s * s)));
    let p_expr = prob.expr(p);
    g_lmis(&mut prob, &corner, &l_expr, &p_expr, margin)?;

    let sol = solver.solve(&prob)?;
    let x = require_optimal(&sol, "feasibility restoration")?;
    let cert = Certificate {
        p: prob.value(p, &x),
        m: prob.value(mm, &x).diagonal(),
        l: l.map_or_else(|| Mat::zeros(m, n), |id| prob.value(id, &x)),
        s,
        alpha,
    };
    verified(params, cert, delta, "feasibility restoration")
}

/// A feasible starting point: `α = 0.99`, `A = 0.9 I`, `C2` uniform on
/// `(−1, 1)`, `C = [I 0]`, `B2 = D = D12 = 0`, and `s` slightly above
/// `δ / sqrt(1 − α²)`; `P, L, M, B, D21` come from an SDP. With `beta`, the
/// ball of that radius is kept inside the region via `β² I ⪯ s² P`.
pub fn initialize(
    solver: &dyn ConicSolver,
    dims: Dimensions,
    delta: f64,
    beta: Option<f64>,
    seed: u64,
    objective: InitObjective,
) -> Result<(ModelParams, Certificate)> {
    dims.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    if dims.e > dims.n {
        return Err(Error::Config(format!(
            "C = [I 0] needs e <= n, got e = {} and n = {}",
            dims.e, dims.n
        )));
    }
    let Dimensions { n, r, e, m } = dims;
    let alpha = INIT_ALPHA;
    let s = (1.0 + INIT_S_INFLATION) * (delta * delta / (1.0 - alpha * alpha)).sqrt();

    let mut params = ModelParams::zeros(dims);
    params.a = Mat::identity(n, n) * INIT_A_SCALE;
    let mut c2_rng = rng::stream(seed, streams::INIT_C2);
    params.c2 = Mat::from_fn(m, n, |_, _| 0.0);
    for i in 0..m {
        for j in 0..n {
            params.c2[(i, j)] = rng::uniform(&mut c2_rng, -1.0, 1.0);
        }
    }
    params.c = Mat::from_fn(e, n, |i, j| if i == j { 1.0 } else { 0.0 });

    let margin = solver.settings().margin;
    let mut prob = SdpProblem::new();
    let p = prob.add_var("P", VarKind::Symmetric { n });
    let mm = prob.add_var("M", VarKind::Diagonal { n: m });
    let l = prob.add_var("L", VarKind::Full { rows: m, cols: n });
    let b = prob.add_var("B", VarKind::Full { rows: n, cols: r });
    let d21 = prob.add_var("D21", VarKind::Full { rows: m, cols: r });
    let parts = FParts {
        dims,
        alpha,
        a: &params.a,
        b2: &params.b2,
        c2: &params.c2,
        p: prob.expr(p),
        l: prob.expr(l),
        m: prob.expr(mm),
        b: prob.expr(b),
        d21: prob.expr(d21),
    };
    match objective {
        InitObjective::Feasibility => neg_f_lmi(&mut prob, &parts, margin)?,
        InitObjective::MaxMargin => {
            let t = prob.add_var("t", VarKind::Scalar);
            let f = f_expr(&parts);
            let k = f.shape().0;
            let t_id = Mat::identity(k, k);
            let mut shifted = f.scale(-1.0);
            for (&j, a) in &prob.expr(t).terms {
                shifted.terms.insert(j, -(&t_id * a[(0, 0)]));
            }
            prob.add_lmi("-F >= t I", shifted)?;
            let cap = prob
                .expr(t)
                .scale(-1.0)
                .add_constant(&Mat::from_element(1, 1, 1.0));
            prob.add_lmi("t <= 1", cap)?;
            prob.add_lmi("t >= margin", prob.expr(t).add_constant(&Mat::from_element(1, 1, -margin)))?;
            prob.minimize(&prob.expr(t).scale(-1.0));
        }
    }
    let corner = Affine::constant(Mat::from_element(1, 1, 1.0 / (s * s)));
    let (l_expr, p_expr) = (prob.expr(l), prob.expr(p));
    g_lmis(&mut prob, &corner, &l_expr, &p_expr, margin)?;
    if let Some(beta) = beta {
        if beta < 0.0 {
            return Err(Error::Config("beta must be nonnegative".into()));
        }
        let ball = prob
            .expr(p)
            .scale(s * s)
            .add_constant(&(-Mat::identity(n, n) * (beta * beta)));
        prob.add_lmi("beta^2 I <= s^2 P", ball)?;
    }

    let sol = solver.solve(&prob)?;
    let x = require_optimal(&sol, "initialization")?;
    params.b = prob.value(b, &x);
    params.d21 = prob.value(d21, &x);
    let cert = Certificate {
        p: prob.value(p, &x),
        m: prob.value(mm, &x).diagonal(),
        l: prob.value(l, &x),
        s,
        alpha,
    };
    let cert = verified(&params, cert, delta, "initialization")?;
    Ok((params, cert))
}

/// Region maximization: with `θ, α` fixed, minimizes `ŝ = 1/s²` subject to
/// `F ≺ 0`, `[[ŝ, l_i], [l_iᵀ, P]] ⪰ 0` and `δ² ŝ ≤ 1 − α²`, then returns the
/// certificate with `s = 1/sqrt(ŝ)`.
pub fn post_process(solver: &dyn ConicSolver, params: &ModelParams, alpha: f64, delta: f64) -> Result<Certificate> {
    post_process_with_problem(solver, params, alpha, delta).map(|(c, _)| c)
}

/// As [`post_process`], also returning the posed problem for export.
pub fn post_process_with_problem(
    solver: &dyn ConicSolver,
    params: &ModelParams,
    alpha: f64,
    delta: f64,
) -> Result<(Certificate, SdpProblem)> {
    params.validate()?;
    check_alpha(alpha)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be finite and >= 0, got {delta}")));
    }
    let Dimensions { n, m, .. } = params.dims;
    let settings = solver.settings();
    let mut prob = SdpProblem::new();
    let s_hat = prob.add_var("s_hat", VarKind::Scalar);
    let p = prob.add_var("P", VarKind::Symmetric { n });
    let mm = prob.add_var("M", VarKind::Diagonal { n: m });
    let l = prob.add_var("L", VarKind::Full { rows: m, cols: n });
    let parts = FParts {
        dims: params.dims,
        alpha,
        a: &params.a,
        b2: &params.b2,
        c2: &params.c2,
        p: prob.expr(p),
        l: prob.expr(l),
        m: prob.expr(mm),
        b: Affine::constant(params.b.clone()),
        d21: Affine::constant(params.d21.clone()),
    };
    neg_f_lmi(&mut prob, &parts, settings.margin)?;
    let (s_expr, l_expr, p_expr) = (prob.expr(s_hat), prob.expr(l), prob.expr(p));
    g_lmis(&mut prob, &s_expr, &l_expr, &p_expr, settings.margin)?;
    let one = |v: f64| Mat::from_element(1, 1, v);
    let delta_row = prob
        .expr(s_hat)
        .scale(-delta * delta)
        .add_constant(&one(1.0 - alpha * alpha));
    prob.add_lmi("delta^2 s_hat <= 1 - alpha^2", delta_row)?;
    let floor = prob
        .expr(s_hat)
        .add_constant(&one(-1.0 / (settings.s_max * settings.s_max)));
    prob.add_lmi("s_hat >= 1 / s_max^2", floor)?;
    prob.minimize(&prob.expr(s_hat));

    let sol = solver.solve(&prob)?;
    let x = require_optimal(&sol, "region maximization")?;
    let s_hat_val = prob.value(s_hat, &x)[(0, 0)];
    if !(s_hat_val > 0.0) {
        return Err(Error::Numerical(format!("region maximization returned s_hat = {s_hat_val}")));
    }
    let cert = Certificate {
        p: prob.value(p, &x),
        m: prob.value(mm, &x).diagonal(),
        l: prob.value(l, &x),
        s: 1.0 / s_hat_val.sqrt(),
        alpha,
    };
    let cert = verified(params, cert, delta, "region maximization")?;
    Ok((cert, prob))
}
