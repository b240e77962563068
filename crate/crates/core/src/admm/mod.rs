//! lp-box ADMM (p = 2) for binary quadratic programs.
//!
//! Binary feasibility `x in {0,1}^n` is rewritten as `x in S_b ∩ S_p` with
//! the box `S_b = [0,1]^n` and the sphere `S_p = {x : ||x - 1/2||_2^2 = n/4}`.
//! Each set gets its own copy of `x` (`y1`, `y2`), and linear constraints get
//! a third copy `y3 = C x` restricted to `{y (rel) d}`. One sweep:
//!
//! ```text
//! y1 <- P_box(x + z1/rho1)
//! y2 <- P_sphere(x + z2/rho2)
//! y3 <- P_rel(C x + z3/rho3)
//! x  <- solve (rho1 I + rho2 I + rho3 C^T C + s (A + A^T)) x
//!             = rho1 y1 + rho2 y2 + C^T (rho3 y3 - z3) - z1 - z2 - s b
//! z  <- z + rho * (residual)
//! rho <- min(mu * rho, rho_max)
//! ```
//!
//! with `s = -1` for maximisation and `+1` for minimisation. The x-system is
//! solved by preconditioned CG warm-started at the previous `x`.

mod cg;
mod projection;
mod trace;

pub use cg::{conjugate_gradient, CgOutcome};
pub use projection::{project_box, project_sphere_l2};
pub use trace::SolverTrace;

use std::cell::RefCell;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{IpInstance, Sense, SparseMatrix};
use crate::rng;
use projection::{project_box_into, project_sphere_into};

/// Ring-buffer length used by [`solve`].
pub const DEFAULT_TRACE_WINDOW: usize = 100;

/// Solver hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    /// Multiplicative penalty growth per iteration.
    pub mu: f64,
    pub rho_max: f64,
    /// Convergence threshold on the largest splitting residual.
    pub tol: f64,
    /// Iteration budget `T`.
    pub max_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Seed of the random initial point.
    pub seed: u64,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            rho1: 1e-2,
            rho2: 1e-2,
            rho3: 1e-2,
            mu: 1.01,
            rho_max: 1e3,
            tol: 1e-4,
            max_iters: 20_000,
            cg_tol: 1e-6,
            cg_max_iters: 200,
            seed: 0,
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho1", self.rho1), ("rho2", self.rho2), ("rho3", self.rho3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", "must be at least 1"));
        }
        if !(self.rho_max > 0.0) {
            return Err(Error::invalid("rho_max", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iters == 0 {
            return Err(Error::invalid("cg", "need cg_tol > 0 and cg_max_iters >= 1"));
        }
        Ok(())
    }
}

/// Primal, splitting and dual variables of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// Constraint copy, present iff the instance has constraints.
    pub y3: Option<Vec<f64>>,
    /// `C x` for the current `x`.
    pub cx: Option<Vec<f64>>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Option<Vec<f64>>,
    pub iter: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
}

impl AdmmState {
    /// Uniform random `x` in `[0,1]^n`, projected copies, zero duals.
    pub fn initial(inst: &IpInstance, params: &AdmmParams) -> Self {
        let mut rng = rng::seeded(params.seed);
        let x: Vec<f64> = (0..inst.n()).map(|_| rng.random::<f64>()).collect();
        AdmmState::from_point(inst, params, x)
    }

    pub fn from_point(inst: &IpInstance, params: &AdmmParams, x: Vec<f64>) -> Self {
        let n = x.len();
        let cx = inst.constraints.as_ref().map(|c| {
            let mut out = vec![0.0; c.m()];
            c.matrix.mul_vec(&x, &mut out);
            out
        });
        let y3 = inst.constraints.as_ref().zip(cx.as_ref()).map(|(c, cx)| {
            cx.iter().zip(&c.rhs).map(|(&v, &d)| c.relation.project(v, d)).collect()
        });
        AdmmState {
            y1: project_box(&x),
            y2: project_sphere_l2(&x),
            z1: vec![0.0; n],
            z2: vec![0.0; n],
            z3: cx.as_ref().map(|c| vec![0.0; c.len()]),
            y3,
            cx,
            x,
            iter: 0,
            rho1: params.rho1,
            rho2: params.rho2,
            rho3: params.rho3,
        }
    }

    /// Largest of `||x - y1||_inf`, `||x - y2||_inf` and `||Cx - y3||_inf`.
    pub fn residual(&self) -> f64 {
        let inf = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let mut r = inf(&self.x, &self.y1).max(inf(&self.x, &self.y2));
        if let (Some(cx), Some(y3)) = (&self.cx, &self.y3) {
            r = r.max(inf(cx, y3));
        }
        r
    }
}

/// True iff every splitting residual is strictly below `tol`.
pub fn converged(state: &AdmmState, tol: f64) -> bool {
    state.residual() < tol
}

/// Rounds at 0.5; exact ties go to 1.
pub fn binarize(x: &[f64]) -> Vec<u8> {
    x.iter().map(|&v| u8::from(v >= 0.5)).collect()
}

/// Cached pieces of the x-subproblem operator for one instance.
#[derive(Debug, Clone)]
struct Operators {
    sign: f64,
    quadratic: Option<SparseMatrix>,
    /// `A^T`, kept only when `A` is not flagged symmetric.
    quadratic_t: Option<SparseMatrix>,
    constraints: Option<SparseMatrix>,
    constraints_t: Option<SparseMatrix>,
    quad_diag: Vec<f64>,
    c_col_sq: Vec<f64>,
    m: usize,
    scratch: RefCell<Vec<f64>>,
}

impl Operators {
    fn new(inst: &IpInstance) -> Self {
        let n = inst.n();
        let sign = match inst.sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };
        let quadratic = inst.quadratic.clone();
        let quadratic_t = match (&quadratic, inst.symmetric) {
            (Some(a), false) => Some(a.transpose()),
            _ => None,
        };
        let quad_diag = quadratic
            .as_ref()
            .map_or_else(|| vec![0.0; n], |a| a.diagonal().iter().map(|d| 2.0 * sign * d).collect());
        let constraints = inst.constraints.as_ref().map(|c| c.matrix.clone());
        let constraints_t = constraints.as_ref().map(SparseMatrix::transpose);
        let c_col_sq = constraints.as_ref().map_or_else(|| vec![0.0; n], SparseMatrix::column_sq_norms);
        let m = inst.m();
        Operators {
            sign,
            quadratic,
            quadratic_t,
            constraints,
            constraints_t,
            quad_diag,
            c_col_sq,
            m,
            scratch: RefCell::new(vec![0.0; m]),
        }
    }

    /// `out = (rho1 + rho2) v + rho3 C^T C v + s (A + A^T) v`.
    fn apply(&self, rho: (f64, f64, f64), v: &[f64], out: &mut [f64]) {
        let diag = rho.0 + rho.1;
        for (o, &x) in out.iter_mut().zip(v) {
            *o = diag * x;
        }
        if let Some(a) = &self.quadratic {
            match &self.quadratic_t {
                None => a.mul_vec_add(2.0 * self.sign, v, out),
                Some(at) => {
                    a.mul_vec_add(self.sign, v, out);
                    at.mul_vec_add(self.sign, v, out);
                }
            }
        }
        if let (Some(c), Some(ct)) = (&self.constraints, &self.constraints_t) {
            let mut cv = self.scratch.borrow_mut();
            c.mul_vec(v, &mut cv);
            ct.mul_vec_add(rho.2, &cv, out);
        }
    }

    fn diagonal(&self, rho: (f64, f64, f64)) -> Vec<f64> {
        self.quad_diag
            .iter()
            .zip(&self.c_col_sq)
            .map(|(q, c)| rho.0 + rho.1 + rho.2 * c + q)
            .collect()
    }
}

/// Outcome of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub cg: CgOutcome,
    pub residual: f64,
}

fn step_with(state: &mut AdmmState, ops: &Operators, inst: &IpInstance, params: &AdmmParams) -> StepReport {
    let n = state.x.len();
    let (r1, r2, r3) = (state.rho1, state.rho2, state.rho3);

    project_box_into(state.x.iter().zip(&state.z1).map(|(x, z)| x + z / r1), &mut state.y1);
    project_sphere_into(state.x.iter().zip(&state.z2).map(|(x, z)| x + z / r2), &mut state.y2);
    if let (Some(block), Some(cx), Some(y3), Some(z3)) =
        (&inst.constraints, &state.cx, &mut state.y3, &state.z3)
    {
        for (((y, &c), &z), &d) in y3.iter_mut().zip(cx).zip(z3).zip(&block.rhs) {
            *y = block.relation.project(c + z / r3, d);
        }
    }

    let mut rhs: Vec<f64> = (0..n)
        .map(|i| r1 * state.y1[i] + r2 * state.y2[i] - state.z1[i] - state.z2[i] - ops.sign * inst.linear[i])
        .collect();
    if let (Some(ct), Some(y3), Some(z3)) = (&ops.constraints_t, &state.y3, &state.z3) {
        let w: Vec<f64> = y3.iter().zip(z3).map(|(y, z)| r3 * y - z).collect();
        ct.mul_vec_add(1.0, &w, &mut rhs);
    }
    let rho = (r1, r2, r3);
    let diag = ops.diagonal(rho);
    let cg = conjugate_gradient(
        |v, out| ops.apply(rho, v, out),
        Some(&diag),
        &rhs,
        &mut state.x,
        params.cg_tol,
        params.cg_max_iters,
    );
    if !cg.converged {
        log::debug!(
            "CG stopped after {} iterations at relative residual {:.3e} (ADMM iteration {})",
            cg.iterations,
            cg.relative_residual,
            state.iter
        );
    }

    if let (Some(c), Some(cx)) = (&ops.constraints, &mut state.cx) {
        c.mul_vec(&state.x, cx);
    }
    for i in 0..n {
        state.z1[i] += r1 * (state.x[i] - state.y1[i]);
        state.z2[i] += r2 * (state.x[i] - state.y2[i]);
    }
    if let (Some(cx), Some(y3), Some(z3)) = (&state.cx, &state.y3, &mut state.z3) {
        for ((z, c), y) in z3.iter_mut().zip(cx).zip(y3) {
            *z += r3 * (c - y);
        }
    }
    state.rho1 = (r1 * params.mu).min(params.rho_max);
    state.rho2 = (r2 * params.mu).min(params.rho_max);
    state.rho3 = (r3 * params.mu).min(params.rho_max);
    state.iter += 1;
    debug_assert_eq!(ops.m, state.cx.as_ref().map_or(0, Vec::len));
    StepReport { cg, residual: state.residual() }
}

/// One full ADMM sweep on `state`.
///
/// Rebuilds the x-subproblem operator on every call; long runs should use
/// [`AdmmSolver`], which caches it.
pub fn admm_step(state: &mut AdmmState, inst: &IpInstance, params: &AdmmParams) -> Result<StepReport> {
    let n = inst.n();
    if state.x.len() != n || state.y1.len() != n || state.y2.len() != n {
        return Err(Error::Contract(format!(
            "state has {} variables, instance has {n}",
            state.x.len()
        )));
    }
    if state.cx.as_ref().map(Vec::len) != inst.constraints.as_ref().map(|c| c.m()) {
        return Err(Error::Contract("constraint copies do not match the instance".into()));
    }
    let ops = Operators::new(inst);
    Ok(step_with(state, &ops, inst, params))
}

/// Stateful solver: instance, cached operator, iterate state and trace.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    inst: IpInstance,
    ops: Operators,
    state: AdmmState,
    params: AdmmParams,
    trace: SolverTrace,
    cg_failures: usize,
}

impl AdmmSolver {
    pub fn new(inst: IpInstance, params: AdmmParams, trace_window: usize) -> Result<Self> {
        params.validate()?;
        let state = AdmmState::initial(&inst, &params);
        let ops = Operators::new(&inst);
        let trace = SolverTrace::new(inst.n(), trace_window);
        Ok(AdmmSolver {
            inst,
            ops,
            state,
            params,
            trace,
            cg_failures: 0,
        })
    }

    pub fn instance(&self) -> &IpInstance {
        &self.inst
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn params(&self) -> &AdmmParams {
        &self.params
    }

    pub fn trace(&self) -> &SolverTrace {
        &self.trace
    }

    pub fn iteration(&self) -> usize {
        self.state.iter
    }

    pub fn cg_failures(&self) -> usize {
        self.cg_failures
    }

    pub fn step(&mut self) -> StepReport {
        let report = step_with(&mut self.state, &self.ops, &self.inst, &self.params);
        if !report.cg.converged {
            self.cg_failures += 1;
        }
        self.trace.push(&self.state.x);
        report
    }

    pub fn converged(&self) -> bool {
        converged(&self.state, self.params.tol)
    }

    /// Drops the variables with `keep[i] == false` and continues on
    /// `reduced`, which must be the instance obtained by fixing exactly
    /// those variables. Surviving coordinates keep their primal, dual and
    /// trace values; `y3` and `z3` are kept as they are.
    pub fn shrink(&mut self, keep: &[bool], reduced: IpInstance) {
        debug_assert_eq!(keep.len(), self.state.x.len());
        let compact = |v: &mut Vec<f64>| {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        };
        compact(&mut self.state.x);
        compact(&mut self.state.y1);
        compact(&mut self.state.y2);
        compact(&mut self.state.z1);
        compact(&mut self.state.z2);
        self.trace.retain(keep);
        if let (Some(block), Some(cx)) = (&reduced.constraints, &mut self.state.cx) {
            block.matrix.mul_vec(&self.state.x, cx);
        }
        self.ops = Operators::new(&reduced);
        self.inst = reduced;
    }

    /// Current iterate rounded at 0.5.
    pub fn rounded(&self) -> Vec<u8> {
        binarize(&self.state.x)
    }

    pub fn into_trace(self) -> SolverTrace {
        self.trace
    }
}

/// Result of a solve, in the original variable indexing.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<u8>,
    /// Objective of `x` on the original instance, offset included.
    pub objective: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub converged: bool,
    /// Sweeps whose CG solve stopped at the iteration cap.
    pub cg_failures: usize,
    pub trace: SolverTrace,
}

/// JSON form of a [`Solution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub x: Vec<u8>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

impl Solution {
    /// `wall_ms` is reported as 0 when `with_timing` is false.
    pub fn record(&self, with_timing: bool) -> SolutionRecord {
        SolutionRecord {
            x: self.x.clone(),
            objective: self.objective,
            iterations: self.iterations,
            converged: self.converged,
            wall_ms: if with_timing { self.wall_time.as_secs_f64() * 1e3 } else { 0.0 },
        }
    }
}

/// Runs plain lp-box ADMM until convergence or `params.max_iters` sweeps.
///
/// `observer(t, x)` is called after every sweep with the 1-based iteration
/// count and the current iterate.
pub fn solve(
    inst: &IpInstance,
    params: &AdmmParams,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<Solution> {
    let start = Instant::now();
    let mut solver = AdmmSolver::new(inst.clone(), params.clone(), DEFAULT_TRACE_WINDOW)?;
    let mut converged = false;
    while solver.iteration() < params.max_iters {
        solver.step();
        observer(solver.iteration(), &solver.state.x);
        if solver.converged() {
            converged = true;
            break;
        }
    }
    let x = solver.rounded();
    let objective = inst.objective(&x);
    Ok(Solution {
        x,
        objective,
        iterations: solver.iteration(),
        wall_time: start.elapsed(),
        converged,
        cg_failures: solver.cg_failures,
        trace: solver.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{ConstraintBlock, Relation};

    fn packing_pair() -> IpInstance {
        let c = ConstraintBlock::new(SparseMatrix::from_dense(&[vec![1.0, 1.0]]), vec![1.0], Relation::Le).unwrap();
        IpInstance::new(Sense::Maximize, None, false, vec![1.0, 2.0], Some(c), 0.0).unwrap()
    }

    #[test]
    fn unconstrained_linear_goes_to_all_ones() {
        let inst = IpInstance::linear_unconstrained(Sense::Maximize, vec![1.0, 1.0]).unwrap();
        let params = AdmmParams { max_iters: 2000, ..Default::default() };
        let sol = solve(&inst, &params, |_, _| {}).unwrap();
        assert_eq!(sol.x, vec![1, 1]);
    }

    #[test]
    fn packing_pair_picks_the_better_bid() {
        let params = AdmmParams { max_iters: 2000, ..Default::default() };
        let sol = solve(&packing_pair(), &params, |_, _| {}).unwrap();
        assert_eq!(sol.x, vec![0, 1]);
        assert_eq!(sol.objective, 2.0);
    }

    #[test]
    fn zero_budget_returns_rounded_start() {
        let inst = packing_pair();
        let params = AdmmParams { max_iters: 0, seed: 3, ..Default::default() };
        let sol = solve(&inst, &params, |_, _| panic!("no sweeps expected")).unwrap();
        let start = AdmmState::initial(&inst, &params);
        assert_eq!(sol.x, binarize(&start.x));
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn solve_is_deterministic() {
        let inst = packing_pair();
        let params = AdmmParams { max_iters: 300, seed: 9, ..Default::default() };
        let mut first = Vec::new();
        let a = solve(&inst, &params, |_, x| first.extend_from_slice(x)).unwrap();
        let mut second = Vec::new();
        let b = solve(&inst, &params, |_, x| second.extend_from_slice(x)).unwrap();
        assert_eq!(first, second);
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn converged_checks_residuals() {
        let inst = IpInstance::linear_unconstrained(Sense::Maximize, vec![1.0, 1.0]).unwrap();
        let params = AdmmParams::default();
        let mut state = AdmmState::from_point(&inst, &params, vec![1.0, 0.0]);
        assert!(converged(&state, 1e-6));
        assert!(!converged(&state, 0.0));
        state.y1[0] = 0.0;
        assert!(!converged(&state, 1e-6));
        assert_eq!(state.residual(), 1.0);
    }

    #[test]
    fn step_rejects_mismatched_state() {
        let inst = packing_pair();
        let params = AdmmParams::default();
        let mut state = AdmmState::initial(&IpInstance::linear_unconstrained(Sense::Maximize, vec![1.0; 3]).unwrap(), &params);
        assert!(matches!(admm_step(&mut state, &inst, &params), Err(Error::Contract(_))));
    }

    #[test]
    fn free_step_matches_solver_step() {
        let inst = packing_pair();
        let params = AdmmParams { seed: 5, ..Default::default() };
        let mut state = AdmmState::initial(&inst, &params);
        let mut solver = AdmmSolver::new(inst.clone(), params.clone(), 4).unwrap();
        for _ in 0..10 {
            admm_step(&mut state, &inst, &params).unwrap();
            solver.step();
        }
        assert_eq!(&state, solver.state());
        assert_eq!(solver.trace().window(1).len(), 4);
    }

    #[test]
    fn binarize_ties_go_up() {
        assert_eq!(binarize(&[0.5, 0.4999, 7.0, -1.0]), vec![1, 0, 1, 0]);
    }
}
