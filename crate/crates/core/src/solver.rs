//! Conic solve layer. Programs are handed to the Clarabel interior-point
//! engine; callers never see engine types.

use std::collections::HashMap;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConicProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iters: u32,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { feas_tol: 1e-7, opt_tol: 1e-7, max_iters: 200, verbose: false }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.feas_tol > 0.0 && self.opt_tol > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        Ok(())
    }
}

/// Terms added to a program's objective for a single solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveOverlay {
    pub linear: Vec<(usize, f64)>,
    /// Diagonal quadratic terms `coef·x_j²`.
    pub quadratic: Vec<(usize, f64)>,
    pub constant: f64,
}

impl ObjectiveOverlay {
    pub fn linear(terms: Vec<(usize, f64)>) -> Self {
        Self { linear: terms, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective including the overlay.
    pub objective: f64,
    pub x: Vec<f64>,
    pub solve_time: f64,
    pub iterations: u32,
    pub max_violation: f64,
    pub detail: String,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Named primal values.
    pub fn primal(&self, prog: &ConicProgram) -> HashMap<String, f64> {
        prog.variables.iter().zip(&self.x).map(|(v, &x)| (v.name.clone(), x)).collect()
    }

    /// Converts a non-optimal result into an error carrying the diagnostics.
    pub fn require_optimal(self, context: &str) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solve { context: context.to_string(), detail: format!("{:?}: {}", self.status, self.detail) })
        }
    }
}

struct Assembled {
    p: CscMatrix<f64>,
    q: Vec<f64>,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn assemble(prog: &ConicProgram, overlay: Option<&ObjectiveOverlay>) -> Assembled {
    let n = prog.n_vars();
    let mut q = prog.linear_obj.clone();
    let mut quad = prog.quad_obj.clone();
    if let Some(ov) = overlay {
        for &(j, c) in &ov.linear {
            q[j] += c;
        }
        for &(j, c) in &ov.quadratic {
            quad[j] += c;
        }
    }
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for (j, &c) in quad.iter().enumerate() {
        if c != 0.0 {
            pi.push(j);
            pj.push(j);
            pv.push(2.0 * c);
        }
    }
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut row = 0usize;
    let mut push_row = |terms: &[(usize, f64)], scale: f64, rhs: f64, b: &mut Vec<f64>| {
        for &(j, c) in terms {
            if c != 0.0 {
                ai.push(row);
                aj.push(j);
                av.push(scale * c);
            }
        }
        b.push(rhs);
        row += 1;
    };
    let mut cones = Vec::new();

    let eqs: Vec<_> = prog.linear_constraints.iter().filter(|r| r.sense == Sense::Eq).collect();
    for r in &eqs {
        push_row(&r.terms, 1.0, r.rhs, &mut b);
    }
    if !eqs.is_empty() {
        cones.push(ZeroConeT(eqs.len()));
    }

    // A x + s = b with s >= 0 means A x <= b
    let mut n_ineq = 0;
    for r in prog.linear_constraints.iter().filter(|r| r.sense != Sense::Eq) {
        match r.sense {
            Sense::Le => push_row(&r.terms, 1.0, r.rhs, &mut b),
            _ => push_row(&r.terms, -1.0, -r.rhs, &mut b),
        }
        n_ineq += 1;
    }
    for (j, v) in prog.variables.iter().enumerate() {
        if v.upper.is_finite() {
            push_row(&[(j, 1.0)], 1.0, v.upper, &mut b);
            n_ineq += 1;
        }
        if v.lower.is_finite() {
            push_row(&[(j, 1.0)], -1.0, -v.lower, &mut b);
            n_ineq += 1;
        }
    }
    if n_ineq > 0 {
        cones.push(NonnegativeConeT(n_ineq));
    }

    // s = b - A x must equal (bound, members...) so A = -coeffs, b = constants
    for cone in &prog.soc_constraints {
        push_row(&cone.bound.terms, -1.0, cone.bound.constant, &mut b);
        for m in &cone.members {
            push_row(&m.terms, -1.0, m.constant, &mut b);
        }
        cones.push(SecondOrderConeT(1 + cone.members.len()));
    }

    let a = CscMatrix::new_from_triplets(row, n, ai, aj, av);
    Assembled { p, q, a, b, cones }
}

/// Solves `prog` with an optional objective overlay.
///
/// Never panics on infeasible or ill-posed input; the outcome is reported in
/// [`SolveResult::status`].
pub fn solve(prog: &ConicProgram, overlay: Option<&ObjectiveOverlay>, cfg: &SolverConfig) -> SolveResult {
    let start = Instant::now();
    let data = assemble(prog, overlay);
    let settings = DefaultSettingsBuilder::default()
        .verbose(cfg.verbose)
        .max_iter(cfg.max_iters)
        .tol_feas(cfg.feas_tol)
        .tol_gap_abs(cfg.opt_tol)
        .tol_gap_rel(cfg.opt_tol)
        .max_threads(1)
        .build()
        .expect("solver settings are valid");

    let failed = |detail: String| SolveResult {
        status: SolveStatus::NumericalFailure,
        objective: f64::NAN,
        x: vec![f64::NAN; prog.n_vars()],
        solve_time: start.elapsed().as_secs_f64(),
        iterations: 0,
        max_violation: f64::INFINITY,
        detail,
    };

    let mut solver = match DefaultSolver::new(&data.p, &data.q, &data.a, &data.b, &data.cones, settings) {
        Ok(s) => s,
        Err(e) => return failed(format!("setup: {e}")),
    };
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let x = sol.x.clone();
    let mut objective = prog.objective_value(&x);
    if let Some(ov) = overlay {
        objective += ov.constant
            + ov.linear.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
            + ov.quadratic.iter().map(|&(j, c)| c * x[j] * x[j]).sum::<f64>();
    }
    let max_violation = prog.max_violation(&x);
    let mut status = status;
    // reduced-accuracy solutions are accepted only if they are still feasible
    if status == SolveStatus::Optimal && max_violation > 1e3 * cfg.feas_tol {
        status = SolveStatus::NumericalFailure;
    }
    SolveResult {
        status,
        objective,
        x,
        solve_time: start.elapsed().as_secs_f64(),
        iterations: sol.iterations,
        max_violation,
        detail: format!("{:?} after {} iterations, r_prim {:e}", sol.status, sol.iterations, sol.r_prim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineExpr;

    #[test]
    fn quadratic_with_lower_bound() {
        let mut prog = ConicProgram::new("toy");
        let x = prog.add_var("x", 3.0, f64::INFINITY);
        prog.quad_obj[x] = 1.0;
        let res = solve(&prog, None, &SolverConfig::default());
        assert!(res.is_optimal());
        assert!((res.objective - 9.0).abs() < 1e-6);
        assert!((res.x[x] - 3.0).abs() < 1e-6);
        assert!((res.primal(&prog)["x"] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn overlay_shifts_optimum() {
        let mut prog = ConicProgram::new("toy");
        let x = prog.add_var("x", -10.0, 10.0);
        prog.quad_obj[x] = 1.0;
        // x² - 4x has minimum -4 at x = 2
        let res = solve(&prog, Some(&ObjectiveOverlay::linear(vec![(x, -4.0)])), &SolverConfig::default());
        assert!((res.x[x] - 2.0).abs() < 1e-6);
        assert!((res.objective + 4.0).abs() < 1e-6);
    }

    #[test]
    fn cone_constraint() {
        // min t s.t. ||(x - 3, 4)|| <= t, x free in [-10, 10]  -> t = 4 at x = 3
        let mut prog = ConicProgram::new("cone");
        let t = prog.add_var("t", f64::NEG_INFINITY, f64::INFINITY);
        let x = prog.add_var("x", -10.0, 10.0);
        prog.linear_obj[t] = 1.0;
        prog.add_soc(
            "c",
            AffineExpr::new(vec![(t, 1.0)], 0.0),
            vec![AffineExpr::new(vec![(x, 1.0)], -3.0), AffineExpr::new(vec![], 4.0)],
        );
        let res = solve(&prog, None, &SolverConfig::default());
        assert!(res.is_optimal());
        assert!((res.objective - 4.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_reported_not_panicking() {
        let mut prog = ConicProgram::new("bad");
        let x = prog.add_var("x", 0.0, 1.0);
        prog.add_linear("r", vec![(x, 1.0)], Sense::Ge, 2.0);
        let res = solve(&prog, None, &SolverConfig::default());
        assert_eq!(res.status, SolveStatus::Infeasible);
        assert!(res.require_optimal("bad").is_err());
    }

    #[test]
    fn unbounded_reported() {
        let mut prog = ConicProgram::new("free");
        let x = prog.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        prog.linear_obj[x] = 1.0;
        prog.add_linear("r", vec![(x, 1.0)], Sense::Le, 0.0);
        let res = solve(&prog, None, &SolverConfig::default());
        assert_eq!(res.status, SolveStatus::Unbounded);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SolverConfig { feas_tol: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
