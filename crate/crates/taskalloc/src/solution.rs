//! Types shared by the solvers: trace rows, operation counters and results.

use std::time::Instant;

use thiserror::Error;

use crate::learning::{self, ObjectiveValue};
use crate::problem::Problem;
use crate::scheduling::{count_active, round_mask};

/// One iteration. Residuals and MSE are in the scaled units of
/// [`crate::problem`]; `objective` is physical.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub mse: f64,
    pub objective: f64,
    pub power_residual: f64,
    pub coupling_residual: f64,
    pub active_users: usize,
    pub wall_time_ns: u64,
    pub theta: Option<f64>,
}

/// Arithmetic work, counted as inner-loop multiply-adds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OpCounts {
    /// Work done inside each task's parallel phase.
    pub per_task: Vec<u64>,
    /// Work done in the serial reduction.
    pub reduction: u64,
    pub iterations: usize,
}

impl OpCounts {
    pub fn new(tasks: usize) -> OpCounts {
        OpCounts { per_task: vec![0; tasks], reduction: 0, iterations: 0 }
    }

    pub fn total(&self) -> u64 {
        self.per_task.iter().sum::<u64>() + self.reduction
    }

    pub fn total_per_iteration(&self) -> f64 {
        self.total() as f64 / self.iterations.max(1) as f64
    }

    pub fn task_per_iteration(&self, i: usize) -> f64 {
        self.per_task[i] as f64 / self.iterations.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Parallel,
    Accelerated,
    EqualPower,
    SumRate,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Parallel => "parallel",
            Method::Accelerated => "accelerated",
            Method::EqualPower => "equal-power",
            Method::SumRate => "sum-rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub method: Method,
    /// Final powers in mW; zero for every rounded-out user.
    pub p_hat: Vec<f64>,
    /// Binary mask after rounding.
    pub mask: Vec<f64>,
    pub relaxed_mask: Vec<f64>,
    /// Final δ in mW (empty for baselines).
    pub delta: Vec<f64>,
    pub objective: ObjectiveValue,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
    pub final_mse: f64,
    /// Scheduling penalties after cap enforcement, per task.
    pub nu_final: Vec<f64>,
    pub counts: OpCounts,
    /// Step size in effect at the end (after any divergence halving).
    pub eta: Option<f64>,
}

impl Solution {
    pub fn active_per_task(&self, tasks: &[crate::config::TaskSpec]) -> Vec<usize> {
        tasks.iter().map(|t| t.user_ids.iter().filter(|&&k| self.mask[k] > 0.0).count()).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("non-finite iterate at iteration {iter} ({detail})")]
    NonFinite { iter: usize, detail: String },
    #[error("diverged at iteration {iter}: MSE and objective rose for at least {window} consecutive iterations and the MSE doubled, after the step size was already halved")]
    Diverged { iter: usize, window: usize },
    #[error("unstable at iteration {iter}: MSE reached {mse:e} after the step size was already halved")]
    Unstable { iter: usize, mse: f64 },
}

/// Consecutive iterations in which both the MSE and the objective rise
/// that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 50;

/// Scaled MSE above which the iterate has left the feasible region for good
/// (power or interference off by ten budgets).
pub const BLOWUP_MSE: f64 = 10.0;

/// Factor the MSE must grow by across such a run; a slow creep on a plateau
/// is not divergence.
pub const DIVERGENCE_GROWTH: f64 = 2.0;

/// p̂ = ⌊w̃⌉∘p rescaled so that Σp̂ = P, in mW, with its mask.
pub fn finalize_power(prob: &Problem, p: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mask = round_mask(w);
    let masked: Vec<f64> = p.iter().zip(&mask).map(|(x, m)| x * m).collect();
    let total: f64 = masked.iter().sum();
    let p_hat = if total > 0.0 {
        masked.iter().map(|x| x / total * prob.power_unit).collect()
    } else {
        masked
    };
    (p_hat, mask)
}

/// Physical objective of the current iterate under the rounded mask.
pub fn iterate_objective(prob: &Problem, p: &[f64], w: &[f64]) -> f64 {
    let mask = round_mask(w);
    let pm: Vec<f64> = p.iter().zip(&mask).map(|(x, m)| x * m * prob.power_unit).collect();
    learning::weighted_objective(&prob.scenario, &prob.gains, &pm, &mask).total
}

pub fn active_users(w: &[f64]) -> usize {
    count_active(w)
}

/// Wall-clock offset since `start`, in nanoseconds.
pub fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().min(u64::MAX as u128) as u64
}
