//! Parallel augmented-Lagrangian solver.
//!
//! Each iteration runs one parallel phase over tasks, all reading the same
//! snapshot: gradient steps on p_i and δ_i, the Gauss-Seidel update of α_i,
//! and the scheduling sweep. A serial reduction in task order then updates
//! β, μ and the MSE. The work each task does depends only on the snapshot,
//! so results do not depend on the thread count.

use std::time::Instant;

use rayon::prelude::*;

use crate::channel::GainMatrix;
use crate::config::{Scenario, WeightConvention};
use crate::learning;
use crate::problem::{norm2, sum_parts, Problem};
use crate::scheduling::{count_active, enforce_cap, pin_leader, relaxed_weight};
use crate::solution::{
    elapsed_ns, finalize_power, iterate_objective, Method, OpCounts, Solution, SolverError, TraceRow,
    BLOWUP_MSE, DIVERGENCE_GROWTH, DIVERGENCE_WINDOW,
};

/// Scaled iterates (see [`crate::problem`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelState {
    pub p: Vec<f64>,
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub mu: f64,
    pub iter: usize,
    pub w: Vec<f64>,
    pub nu: Vec<f64>,
}

/// p = 1/K, δ = (G − D)p + σ², α = 1/K, β = 1, μ = 1, w̃ = 1.
pub fn init_state(prob: &Problem) -> ParallelState {
    let k = prob.k;
    let p = prob.equal_power();
    let delta = prob.true_delta(&p);
    ParallelState {
        p,
        delta,
        alpha: vec![1.0 / k as f64; k],
        beta: 1.0,
        mu: 1.0,
        iter: 0,
        w: vec![1.0; k],
        nu: prob.tasks.iter().map(|t| t.nu).collect(),
    }
}

/// max(p_i − η g − ν(1 − w̃_i), 0).
pub fn step_p(p: &[f64], grad: &[f64], w: &[f64], eta: f64, nu: f64) -> Vec<f64> {
    p.iter()
        .zip(grad)
        .zip(w)
        .map(|((&x, &g), &wk)| (x - eta * g - nu * (1.0 - wk)).max(0.0))
        .collect()
}

/// max(δ_i − η g, σ²).
pub fn step_delta(d: &[f64], grad: &[f64], eta: f64, sigma2: f64) -> Vec<f64> {
    d.iter().zip(grad).map(|(&x, &g)| (x - eta * g).max(sigma2)).collect()
}

/// β + (μ/I)(1ᵀp − P), with P = 1 in scaled units.
pub fn step_dual_beta(beta: f64, mu: f64, num_tasks: usize, sum_p: f64) -> f64 {
    beta + mu / num_tasks as f64 * (sum_p - 1.0)
}

pub fn mu_next(mu: f64, mu_s: f64, mu_max: f64) -> f64 {
    (mu_s * mu).min(mu_max)
}

/// ‖p − p'‖ + ‖δ − δ'‖ + |1ᵀp − 1| + ‖(G − D)p − δ + σ²‖ in scaled units.
pub fn mse(prob: &Problem, p: &[f64], p_prev: &[f64], d: &[f64], d_prev: &[f64]) -> f64 {
    let coupling = prob.true_delta(p);
    mse_from_parts(p, p_prev, d, d_prev, &coupling, 0.0)
}

/// MSE given `coupling` = (G − D)p + `offset`; the σ² term is taken from
/// `coupling` when `offset` is zero.
pub(crate) fn mse_from_parts(p: &[f64], p_prev: &[f64], d: &[f64], d_prev: &[f64], coupling: &[f64], offset: f64) -> f64 {
    let dp = norm2(p.iter().zip(p_prev).map(|(a, b)| a - b));
    let dd = norm2(d.iter().zip(d_prev).map(|(a, b)| a - b));
    let sp = (p.iter().sum::<f64>() - 1.0).abs();
    let c = norm2(coupling.iter().zip(d).map(|(g, x)| g + offset - x));
    dp + dd + sp + c
}

struct TaskUpdate {
    p: Vec<f64>,
    d: Vec<f64>,
    alpha: Vec<f64>,
    w: Vec<f64>,
    nu: f64,
    dp_part: Vec<f64>,
    gp_part: Vec<f64>,
    ops: u64,
}

pub struct StepOutcome {
    pub row: TraceRow,
    pub done: bool,
}

/// Solver state worth returning to after a blow-up.
struct Checkpoint {
    state: ParallelState,
    dp_parts: Vec<Vec<f64>>,
    gp_parts: Vec<Vec<f64>>,
    dp: Vec<f64>,
    gdp: Vec<f64>,
    mse: f64,
}

pub struct ParallelSolver {
    prob: Problem,
    state: ParallelState,
    eta: f64,
    halved: bool,
    dp_parts: Vec<Vec<f64>>,
    gp_parts: Vec<Vec<f64>>,
    dp: Vec<f64>,
    gdp: Vec<f64>,
    counts: OpCounts,
    trace: Vec<TraceRow>,
    prev_mse: f64,
    prev_objective: f64,
    rises: usize,
    /// MSE just before the current run of rises began.
    rise_base: f64,
    best: Option<Checkpoint>,
    last_mse: f64,
    converged: bool,
    start: Instant,
}

impl ParallelSolver {
    pub fn new(scenario: &Scenario, gains: &GainMatrix) -> ParallelSolver {
        ParallelSolver::from_problem(Problem::new(scenario, gains))
    }

    pub fn from_problem(prob: Problem) -> ParallelSolver {
        let state = init_state(&prob);
        let mut ops = 0;
        let dp_parts: Vec<Vec<f64>> =
            (0..prob.num_tasks()).map(|i| prob.col_apply(i, &state.w, &state.p, &mut ops)).collect();
        let gp_parts: Vec<Vec<f64>> =
            (0..prob.num_tasks()).map(|i| prob.col_apply_unmasked(i, &state.p, &mut ops)).collect();
        let dp = sum_parts(&dp_parts, prob.k);
        let gdp = sum_parts(&gp_parts, prob.k);
        ParallelSolver {
            eta: prob.opts.eta,
            counts: OpCounts::new(prob.num_tasks()),
            prob,
            state,
            halved: false,
            dp_parts,
            gp_parts,
            dp,
            gdp,
            trace: Vec::new(),
            prev_mse: f64::INFINITY,
            prev_objective: f64::INFINITY,
            rises: 0,
            rise_base: f64::INFINITY,
            best: None,
            last_mse: f64::INFINITY,
            converged: false,
            start: Instant::now(),
        }
    }

    pub fn problem(&self) -> &Problem {
        &self.prob
    }

    pub fn state(&self) -> &ParallelState {
        &self.state
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn counts(&self) -> &OpCounts {
        &self.counts
    }

    /// P_i = 1ᵀp_i − (1ᵀp − P)/I.
    pub fn eliminated_pi(&self, i: usize) -> f64 {
        let st = &self.state;
        let own: f64 = self.prob.tasks[i].users.iter().map(|&k| st.p[k]).sum();
        own - (st.p.iter().sum::<f64>() - 1.0) / self.prob.num_tasks() as f64
    }

    /// z_i = Δ(:,K_i)p_i − (Δp − δ + σ²)/I.
    pub fn eliminated_zi(&self, i: usize) -> Vec<f64> {
        let inv = 1.0 / self.prob.num_tasks() as f64;
        (0..self.prob.k)
            .map(|k| self.dp_parts[i][k] - (self.dp[k] - self.state.delta[k] + self.prob.sigma2) * inv)
            .collect()
    }

    fn coef(&self) -> Vec<f64> {
        let st = &self.state;
        let c = st.mu / self.prob.num_tasks() as f64;
        (0..self.prob.k).map(|k| st.alpha[k] + c * (self.dp[k] - st.delta[k] + self.prob.sigma2)).collect()
    }

    fn grad_p_with(&self, i: usize, coef: &[f64], ops: &mut u64) -> Vec<f64> {
        let st = &self.state;
        let t = &self.prob.tasks[i];
        let gphi = self.prob.grad_phi_p(i, &st.p, &st.delta, &st.w);
        *ops += t.users.len() as u64;
        let ct = self.prob.col_t_apply(i, &st.w, coef, ops);
        let shift = st.beta + st.mu * (st.p.iter().sum::<f64>() - 1.0) / self.prob.num_tasks() as f64;
        gphi.iter().zip(&ct).map(|(g, c)| t.lambda * g + c + shift).collect()
    }

    fn grad_delta_with(&self, i: usize, ops: &mut u64) -> Vec<f64> {
        let st = &self.state;
        let t = &self.prob.tasks[i];
        let gphi = self.prob.grad_phi_delta(i, &st.p, &st.delta, &st.w);
        *ops += t.users.len() as u64;
        let c = st.mu / self.prob.num_tasks() as f64;
        t.users
            .iter()
            .zip(&gphi)
            .map(|(&k, g)| t.lambda * g - st.alpha[k] - c * (self.dp[k] + self.prob.sigma2 - st.delta[k]))
            .collect()
    }

    /// Gradient of the task-i augmented Lagrangian in p_i at the current state.
    pub fn grad_l_p(&self, i: usize) -> Vec<f64> {
        let mut ops = 0;
        self.grad_p_with(i, &self.coef(), &mut ops)
    }

    /// Gradient of the task-i augmented Lagrangian in δ_i at the current state.
    pub fn grad_l_delta(&self, i: usize) -> Vec<f64> {
        let mut ops = 0;
        self.grad_delta_with(i, &mut ops)
    }

    /// The task-i augmented Lagrangian as a function of p_i, with P_i and z_i
    /// frozen at the current state.
    pub fn explicit_l_p(&self, i: usize, p_i: &[f64]) -> f64 {
        let st = &self.state;
        let t = &self.prob.tasks[i];
        let pi_fixed = self.eliminated_pi(i);
        let zi = self.eliminated_zi(i);
        let mut p = st.p.clone();
        for (j, &k) in t.users.iter().enumerate() {
            p[k] = p_i[j];
        }
        let mut ops = 0;
        let dpi = self.prob.col_apply(i, &st.w, &p, &mut ops);
        let phi = learning::phi(&t.model, self.prob.bt, &t.users, &self.prob.gdiag, &st.w, &p, &st.delta);
        let s: f64 = p_i.iter().sum::<f64>() - pi_fixed;
        let mut lin = 0.0;
        let mut quad = 0.0;
        for k in 0..self.prob.k {
            let r = dpi[k] - zi[k];
            lin += st.alpha[k] * r;
            quad += r * r;
        }
        t.lambda * phi + lin + st.beta * s + 0.5 * st.mu * s * s + 0.5 * st.mu * quad
    }

    /// The task-i augmented Lagrangian as a function of δ_i.
    pub fn explicit_l_delta(&self, i: usize, d_i: &[f64]) -> f64 {
        let st = &self.state;
        let t = &self.prob.tasks[i];
        let mut d = st.delta.clone();
        for (j, &k) in t.users.iter().enumerate() {
            d[k] = d_i[j];
        }
        let phi = learning::phi(&t.model, self.prob.bt, &t.users, &self.prob.gdiag, &st.w, &st.p, &d);
        let c = st.mu / self.prob.num_tasks() as f64;
        let mut rest = 0.0;
        for &k in &t.users {
            let r = self.dp[k] + self.prob.sigma2 - d[k];
            rest += -st.alpha[k] * d[k] + 0.5 * c * r * r;
        }
        t.lambda * phi + rest
    }

    fn task_update(&self, i: usize, coef: &[f64]) -> TaskUpdate {
        let prob = &self.prob;
        let st = &self.state;
        let t = &prob.tasks[i];
        let users = &t.users;
        let inv = 1.0 / prob.num_tasks() as f64;
        let mut ops = 0u64;

        let grad = self.grad_p_with(i, coef, &mut ops);
        let p_old: Vec<f64> = users.iter().map(|&k| st.p[k]).collect();
        let w_old: Vec<f64> = users.iter().map(|&k| st.w[k]).collect();
        let p_new = step_p(&p_old, &grad, &w_old, self.eta, prob.opts.nu_power);

        let gd = self.grad_delta_with(i, &mut ops);
        let d_old: Vec<f64> = users.iter().map(|&k| st.delta[k]).collect();
        let d_new = step_delta(&d_old, &gd, self.eta, prob.sigma2);

        let mut pmix = st.p.clone();
        for (j, &k) in users.iter().enumerate() {
            pmix[k] = p_new[j];
        }
        ops += prob.k as u64;
        let own = prob.col_apply(i, &st.w, &pmix, &mut ops);
        let dmix: Vec<f64> = users.iter().map(|&k| self.dp[k] - self.dp_parts[i][k] + own[k]).collect();
        let alpha: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(j, &k)| st.alpha[k] + st.mu * inv * (dmix[j] - d_new[j] + prob.sigma2))
            .collect();
        ops += 3 * users.len() as u64;

        let (w_new, nu) = if prob.opts.scheduling {
            let interference = schedule_interference(prob, i, &st.w, &pmix, &dmix, &self.gdp, &self.gp_parts[i], &mut ops);
            let signal: Vec<f64> = users.iter().zip(&p_new).map(|(&k, x)| prob.gdiag[k] * x).collect();
            let eps = prob.opts.epsilon_floor;
            let mut sweeps = 0u64;
            let mut sweep = |nu: f64| {
                sweeps += 1;
                (0..users.len()).map(|j| relaxed_weight(w_old[j], signal[j], interference[j], nu, eps)).collect()
            };
            let first = sweep(st.nu[i]);
            let out = enforce_cap(first, t.cap, st.nu[i], eps, &mut sweep);
            ops += sweeps * users.len() as u64;
            let mut seg = out.segment;
            pin_leader(&mut seg);
            (seg, out.nu)
        } else {
            (w_old.clone(), st.nu[i])
        };

        let dp_part = if w_new == w_old {
            own
        } else {
            let mut w = st.w.clone();
            for (j, &k) in users.iter().enumerate() {
                w[k] = w_new[j];
            }
            prob.col_apply(i, &w, &pmix, &mut ops)
        };
        let gp_part = prob.col_apply_unmasked(i, &pmix, &mut ops);

        TaskUpdate { p: p_new, d: d_new, alpha, w: w_new, nu, dp_part, gp_part, ops }
    }

    /// One iteration. Returns the trace row and whether the run has stopped.
    pub fn step(&mut self) -> Result<StepOutcome, SolverError> {
        loop {
            let i_count = self.prob.num_tasks();
            let k = self.prob.k;
            let coef = self.coef();
            let updates: Vec<TaskUpdate> = (0..i_count).into_par_iter().map(|i| self.task_update(i, &coef)).collect();

            let finite = updates
                .iter()
                .all(|u| u.p.iter().chain(&u.d).chain(&u.alpha).all(|x| x.is_finite()));
            if !finite {
                if !self.halved {
                    self.halved = true;
                    self.eta *= 0.5;
                    continue;
                }
                return Err(SolverError::NonFinite {
                    iter: self.state.iter + 1,
                    detail: "power, interference or dual iterate".into(),
                });
            }

            let p_prev = self.state.p.clone();
            let d_prev = self.state.delta.clone();
            let mut red = 2 * k as u64;
            for (i, u) in updates.into_iter().enumerate() {
                let users = &self.prob.tasks[i].users;
                for (j, &kk) in users.iter().enumerate() {
                    self.state.p[kk] = u.p[j];
                    self.state.delta[kk] = u.d[j];
                    self.state.alpha[kk] = u.alpha[j];
                    self.state.w[kk] = u.w[j];
                }
                self.state.nu[i] = u.nu;
                self.dp_parts[i] = u.dp_part;
                self.gp_parts[i] = u.gp_part;
                self.counts.per_task[i] += u.ops;
            }
            self.dp = sum_parts(&self.dp_parts, k);
            self.gdp = sum_parts(&self.gp_parts, k);
            red += 2 * (k * i_count) as u64;

            let sum_p: f64 = self.state.p.iter().sum();
            self.state.beta = step_dual_beta(self.state.beta, self.state.mu, i_count, sum_p);
            self.state.mu = mu_next(self.state.mu, self.prob.opts.mu_s, self.prob.mu_max);
            let m = mse_from_parts(&self.state.p, &p_prev, &self.state.delta, &d_prev, &self.gdp, self.prob.sigma2);
            red += 5 * k as u64;
            self.counts.reduction += red;
            self.counts.iterations += 1;

            if m > BLOWUP_MSE {
                if self.halved {
                    return Err(SolverError::Unstable { iter: self.state.iter + 1, mse: m });
                }
                if let Some(cp) = &self.best {
                    let iter = self.state.iter;
                    self.state = cp.state.clone();
                    self.state.iter = iter;
                    self.dp_parts = cp.dp_parts.clone();
                    self.gp_parts = cp.gp_parts.clone();
                    self.dp = cp.dp.clone();
                    self.gdp = cp.gdp.clone();
                    self.prev_mse = cp.mse;
                    self.prev_objective = f64::INFINITY;
                    self.rises = 0;
                    self.halved = true;
                    self.eta *= 0.5;
                    continue;
                }
            }
            self.state.iter += 1;

            let row = TraceRow {
                iter: self.state.iter,
                mse: m,
                objective: iterate_objective(&self.prob, &self.state.p, &self.state.w),
                power_residual: (sum_p - 1.0).abs(),
                coupling_residual: norm2(
                    self.gdp.iter().zip(&self.state.delta).map(|(g, d)| g + self.prob.sigma2 - d),
                ),
                active_users: count_active(&self.state.w),
                wall_time_ns: elapsed_ns(self.start),
                theta: None,
            };
            self.trace.push(row.clone());
            self.last_mse = m;
            if self.best.as_ref().is_none_or(|cp| m < cp.mse) {
                self.best = Some(Checkpoint {
                    state: self.state.clone(),
                    dp_parts: self.dp_parts.clone(),
                    gp_parts: self.gp_parts.clone(),
                    dp: self.dp.clone(),
                    gdp: self.gdp.clone(),
                    mse: m,
                });
            }

            // Mask hand-overs raise the MSE while the objective keeps falling;
            // only joint growth counts towards divergence.
            if m > self.prev_mse && row.objective > self.prev_objective {
                if self.rises == 0 {
                    self.rise_base = self.prev_mse;
                }
                self.rises += 1;
            } else {
                self.rises = 0;
            }
            self.prev_mse = m;
            self.prev_objective = row.objective;
            if self.rises >= DIVERGENCE_WINDOW && m >= DIVERGENCE_GROWTH * self.rise_base {
                if self.halved {
                    return Err(SolverError::Diverged { iter: self.state.iter, window: DIVERGENCE_WINDOW });
                }
                self.halved = true;
                self.eta *= 0.5;
                self.rises = 0;
            }

            self.converged = m <= self.prob.opts.epsilon_tol;
            let done = self.converged || self.state.iter >= self.prob.opts.max_iters;
            return Ok(StepOutcome { row, done });
        }
    }

    pub fn finish(self) -> Solution {
        let (p_hat, mask) = finalize_power(&self.prob, &self.state.p, &self.state.w);
        let objective = learning::weighted_objective(&self.prob.scenario, &self.prob.gains, &p_hat, &mask);
        Solution {
            method: Method::Parallel,
            p_hat,
            mask,
            relaxed_mask: self.state.w.clone(),
            delta: self.prob.delta_to_mw(&self.state.delta),
            objective,
            iterations: self.state.iter,
            final_mse: self.last_mse,
            converged: self.converged,
            nu_final: self.state.nu.clone(),
            counts: self.counts,
            eta: Some(self.eta),
            trace: self.trace,
        }
    }

    pub fn run_with(mut self, observer: &mut dyn FnMut(&TraceRow)) -> Result<Solution, SolverError> {
        loop {
            let out = self.step()?;
            observer(&out.row);
            if out.done {
                return Ok(self.finish());
            }
        }
    }
}

/// δ_k entering the scheduling update for the users of task `i`, with the
/// task's fresh powers and everyone else's snapshot powers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn schedule_interference(
    prob: &Problem,
    i: usize,
    w: &[f64],
    pmix: &[f64],
    dmix: &[f64],
    gfull: &[f64],
    gpart: &[f64],
    ops: &mut u64,
) -> Vec<f64> {
    let users = &prob.tasks[i].users;
    match prob.opts.weight_convention {
        WeightConvention::Interferer => dmix.iter().map(|x| x + prob.sigma2).collect(),
        WeightConvention::Victim => {
            *ops += (users.len() * users.len()) as u64;
            users
                .iter()
                .map(|&k| {
                    let row = prob.g.row(k);
                    let mut own = 0.0;
                    for &l in users {
                        if l != k {
                            own += row[l] * pmix[l];
                        }
                    }
                    w[k] * (gfull[k] - gpart[k] + own) + prob.sigma2
                })
                .collect()
        }
    }
}

pub fn run(scenario: &Scenario, gains: &GainMatrix) -> Result<Solution, SolverError> {
    ParallelSolver::new(scenario, gains).run_with(&mut |_| {})
}

pub fn run_with(
    scenario: &Scenario,
    gains: &GainMatrix,
    observer: &mut dyn FnMut(&TraceRow),
) -> Result<Solution, SolverError> {
    ParallelSolver::new(scenario, gains).run_with(observer)
}
