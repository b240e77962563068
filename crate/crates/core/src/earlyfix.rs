//! Block-wise early fixing around the ADMM solver.
//!
//! Every `beta` sweeps the policy scores each free variable from its last
//! `beta` iterates. Scores above `delta` fix the variable to 1, scores below
//! `1 - delta` fix it to 0, and the problem is shrunk exactly before the
//! solver continues on the survivors. A run ends when the solver converges,
//! when no free variable is left, or when the iteration budget is spent.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::admm::{AdmmParams, AdmmSolver, Solution};
use crate::error::{Error, Result};
use crate::instances::IpInstance;
use crate::policy::{heuristic_policy, PolicyWeights};
use crate::reformulate::{apply_fixing, lift_solution, FixMask, VarStatus};

/// Per-variable decision of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Fix1,
    Fix0,
    Stay,
}

/// `p > delta` fixes to 1, `p < 1 - delta` fixes to 0, anything else stays.
pub fn decide_actions(p: &[f64], delta: f64) -> Vec<Action> {
    p.iter()
        .map(|&pi| {
            if pi > delta {
                Action::Fix1
            } else if pi < 1.0 - delta {
                Action::Fix0
            } else {
                Action::Stay
            }
        })
        .collect()
}

/// Source of fixing probabilities.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Never evaluated; the run reduces to plain ADMM.
    None,
    /// Fraction of the window above 0.5.
    Heuristic,
    Learned(Box<PolicyWeights<f32>>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::None => "plain",
            Policy::Heuristic => "heuristic",
            Policy::Learned(w) if w.config().use_attention => "learned",
            Policy::Learned(_) => "learned-noatt",
        }
    }

    /// Probabilities for `windows`, a row-major `u x beta` matrix.
    pub fn probabilities(&self, windows: &[f64], beta: usize) -> Result<Vec<f64>> {
        match self {
            Policy::None => Ok(Vec::new()),
            Policy::Heuristic => Ok(windows.chunks(beta).map(heuristic_policy).collect()),
            Policy::Learned(weights) => weights.predict(windows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Sweeps per block.
    pub beta: usize,
    /// Fixing threshold in `[0.5, 1]`.
    pub delta: f64,
    /// Iteration budget `T'`.
    pub max_iters: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 2 {
            return Err(Error::invalid("beta", "must be at least 2"));
        }
        if !(0.5..=1.0).contains(&self.delta) {
            return Err(Error::invalid("delta", "must lie in [0.5, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    AllFixed,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Sweeps completed when the policy was queried.
    pub iteration: usize,
    pub fixed_zero: usize,
    pub fixed_one: usize,
    /// Free variables after the round.
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub rounds: Vec<RoundLog>,
    /// Objective (original units) of the rounded iterate after every sweep.
    pub objective_trace: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    /// Final status of every original variable.
    pub statuses: Vec<VarStatus>,
    pub solver_seconds: f64,
    pub policy_seconds: f64,
}

impl EpisodeLog {
    pub fn total_fixed(&self) -> usize {
        self.rounds.iter().map(|r| r.fixed_zero + r.fixed_one).sum()
    }

    /// Copy with wall-clock fields zeroed, for reproducible output files.
    pub fn without_timing(&self) -> EpisodeLog {
        EpisodeLog {
            solver_seconds: 0.0,
            policy_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Runs ADMM with early fixing.
pub fn run(
    inst: &IpInstance,
    cfg: &RunConfig,
    policy: &Policy,
    params: &AdmmParams,
) -> Result<(Solution, EpisodeLog)> {
    run_with_observer(inst, cfg, policy, params, |_, _| {})
}

/// [`run`] with `observer(t, x)` called after every sweep on the current
/// (reduced) iterate.
pub fn run_with_observer(
    inst: &IpInstance,
    cfg: &RunConfig,
    policy: &Policy,
    params: &AdmmParams,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<(Solution, EpisodeLog)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut policy_time = Duration::ZERO;
    let mut solver = AdmmSolver::new(inst.clone(), params.clone(), cfg.beta)?;
    let mut mask = FixMask::new(inst.n());
    let mut rounds = Vec::new();
    let mut objective_trace = Vec::new();
    let mut termination = Termination::Budget;
    let mut converged = false;

    if inst.n() == 0 {
        termination = Termination::AllFixed;
    }
    while termination != Termination::AllFixed && solver.iteration() < cfg.max_iters {
        solver.step();
        let t = solver.iteration();
        observer(t, &solver.state().x);
        objective_trace.push(solver.instance().objective(&solver.rounded()));
        if solver.converged() {
            termination = Termination::Converged;
            converged = true;
            break;
        }
        if t % cfg.beta != 0 || matches!(policy, Policy::None) {
            continue;
        }

        let policy_start = Instant::now();
        let windows = solver.trace().windows();
        let probs = policy.probabilities(&windows, cfg.beta)?;
        let actions = decide_actions(&probs, cfg.delta);
        let originals = mask.reduced_to_original();
        let decisions: Vec<(usize, bool)> = actions
            .iter()
            .enumerate()
            .filter_map(|(r, a)| match a {
                Action::Fix1 => Some((originals[r], true)),
                Action::Fix0 => Some((originals[r], false)),
                Action::Stay => None,
            })
            .collect();
        let fixed_one = decisions.iter().filter(|d| d.1).count();
        if !decisions.is_empty() {
            let keep: Vec<bool> = actions.iter().map(|a| *a == Action::Stay).collect();
            let (reduced, next) = apply_fixing(solver.instance(), &mask, &decisions)?;
            solver.shrink(&keep, reduced);
            mask = next;
        }
        rounds.push(RoundLog {
            round: rounds.len(),
            iteration: t,
            fixed_zero: decisions.len() - fixed_one,
            fixed_one,
            remaining: mask.free_count(),
        });
        policy_time += policy_start.elapsed();
        if mask.free_count() == 0 {
            termination = Termination::AllFixed;
        }
    }

    let x = lift_solution(&solver.rounded(), &mask)?;
    let objective = inst.objective(&x);
    let wall_time = start.elapsed();
    let log = EpisodeLog {
        rounds,
        objective_trace,
        termination,
        iterations: solver.iteration(),
        statuses: mask.status().to_vec(),
        solver_seconds: (wall_time - policy_time).as_secs_f64(),
        policy_seconds: policy_time.as_secs_f64(),
    };
    let solution = Solution {
        x,
        objective,
        iterations: solver.iteration(),
        wall_time,
        converged,
        cg_failures: solver.cg_failures(),
        trace: solver.into_trace(),
    };
    Ok((solution, log))
}
