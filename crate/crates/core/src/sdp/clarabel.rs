//! [`ConicSolver`] backed by the Clarabel interior-point solver.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus,
    SupportedConeT,
};

use super::problem::SdpProblem;
use super::{ConicSolver, SdpSolution, SdpStatus, SolverSettings};
use crate::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ClarabelSolver {
    pub settings: SolverSettings,
}

impl ClarabelSolver {
    pub fn new(settings: SolverSettings) -> Self {
        ClarabelSolver { settings }
    }
}

/// Row index of entry `(i, j)`, `i <= j`, in Clarabel's column-major
/// upper-triangle vectorization.
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

impl ConicSolver for ClarabelSolver {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution> {
        let nvar = problem.num_scalars;
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row0 = 0;
        // s = b − A x must lie in the cone, with s = svec(C + Σ x_j A_j).
        for lmi in &problem.lmis {
            let k = lmi.expr.shape().0;
            let weight = |i: usize, j: usize| if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            if k == 1 {
                cones.push(NonnegativeConeT(1));
            } else {
                cones.push(PSDTriangleConeT(k));
            }
            let len = k * (k + 1) / 2;
            let mut bl = vec![0.0; len];
            for j in 0..k {
                for i in 0..=j {
                    bl[svec_index(i, j)] = weight(i, j) * lmi.expr.constant[(i, j)];
                }
            }
            b.extend(bl);
            for (&var, a) in &lmi.expr.terms {
                for j in 0..k {
                    for i in 0..=j {
                        let v = a[(i, j)];
                        if v != 0.0 {
                            rows.push(row0 + svec_index(i, j));
                            cols.push(var);
                            vals.push(-weight(i, j) * v);
                        }
                    }
                }
            }
            row0 += len;
        }
        let a = CscMatrix::new_from_triplets(row0, nvar, rows, cols, vals);
        let p = CscMatrix::zeros((nvar, nvar));
        let mut q = vec![0.0; nvar];
        for (&j, &c) in &problem.objective {
            q[j] = c;
        }

        let s = &self.settings;
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(s.max_iter)
            .tol_feas(s.tol_feas)
            .tol_gap_abs(s.tol_gap)
            .tol_gap_rel(s.tol_gap)
            .max_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("solver settings: {e}")))?;

        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Numerical(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SdpStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SdpStatus::Infeasible,
            _ => SdpStatus::NumericalFailure,
        };
        let optimal = status == SdpStatus::Optimal;
        Ok(SdpSolution {
            status,
            solver_status: format!("{:?}", sol.status),
            x: optimal.then(|| sol.x.clone()),
            objective: optimal.then_some(sol.obj_val),
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            solve_seconds: start.elapsed().as_secs_f64(),
        })
    }
}
