//! Accelerated proximal linearized solver.
//!
//! Registers x (committed), y (extrapolation) and z (prox centers) per block,
//! closed-form block steps on quadratic majorants, θ/μ recurrences with
//! μ = 1/θ. Same snapshot/reduction structure as the parallel solver.

use std::time::Instant;

use rayon::prelude::*;

use crate::channel::GainMatrix;
use crate::config::Scenario;
use crate::learning;
use crate::problem::{norm2, sum_parts, Problem};
use crate::scheduling::{count_active, enforce_cap, pin_leader, relaxed_weight};
use crate::solution::{
    elapsed_ns, finalize_power, iterate_objective, Method, OpCounts, Solution, SolverError, TraceRow,
};
use crate::solver_parallel::{mse_from_parts, schedule_interference, step_dual_beta, StepOutcome};

/// θ₊ = ½(−θ² + √(θ⁴ + 4θ²)), the positive root of θ₊² = θ²(1 − θ₊).
pub fn theta_next(theta: f64) -> f64 {
    let t2 = theta * theta;
    0.5 * (-t2 + (t2 * t2 + 4.0 * t2).sqrt())
}

/// (1 − θ)x + θz.
pub fn extrapolate(x: &[f64], z: &[f64], theta: f64) -> Vec<f64> {
    x.iter().zip(z).map(|(a, b)| (1.0 - theta) * a + theta * b).collect()
}

/// λ_{p_i} = 2·max(K/I, |K_i|)·(‖Δ(:,K_i)‖₂ + 1)².
pub fn lambda_p_bound(col_norm: f64, num_users: usize, num_tasks: usize, task_users: usize) -> f64 {
    let m = (num_users as f64 / num_tasks as f64).max(task_users as f64);
    2.0 * m * (col_norm + 1.0) * (col_norm + 1.0)
}

pub const LAMBDA_DELTA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AccelState {
    pub x_p: Vec<f64>,
    pub x_delta: Vec<f64>,
    pub y_p: Vec<f64>,
    pub y_delta: Vec<f64>,
    pub z_p: Vec<f64>,
    pub z_delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub theta: f64,
    pub mu: f64,
    pub iter: usize,
    pub w: Vec<f64>,
    pub nu: Vec<f64>,
    pub lambda_p: Vec<f64>,
    pub l_p: Vec<f64>,
    pub l_delta: Vec<f64>,
}

struct TaskUpdate {
    y_p: Vec<f64>,
    y_d: Vec<f64>,
    x_p: Vec<f64>,
    x_d: Vec<f64>,
    z_p: Vec<f64>,
    z_d: Vec<f64>,
    alpha: Vec<f64>,
    w: Vec<f64>,
    nu: Vec<f64>,
    lambda_p: f64,
    power_vec: Vec<f64>,
    dz_part: Vec<f64>,
    dx_part: Vec<f64>,
    gx_part: Vec<f64>,
    ops: u64,
}

pub struct AccelSolver {
    prob: Problem,
    state: AccelState,
    dz_parts: Vec<Vec<f64>>,
    dx_parts: Vec<Vec<f64>>,
    gx_parts: Vec<Vec<f64>>,
    dz: Vec<f64>,
    dx: Vec<f64>,
    gx: Vec<f64>,
    power_vecs: Vec<Vec<f64>>,
    counts: OpCounts,
    trace: Vec<TraceRow>,
    last_mse: f64,
    converged: bool,
    start: Instant,
}

impl AccelSolver {
    pub fn new(scenario: &Scenario, gains: &GainMatrix) -> AccelSolver {
        AccelSolver::from_problem(Problem::new(scenario, gains))
    }

    pub fn from_problem(prob: Problem) -> AccelSolver {
        let k = prob.k;
        let i_count = prob.num_tasks();
        let x_p = prob.equal_power();
        let x_delta = prob.true_delta(&x_p);
        let w = vec![1.0; k];
        let mut ops = 0;
        let mut power_vecs = vec![Vec::new(); i_count];
        let lambda_p = (0..i_count)
            .map(|i| {
                let n = prob.col_norm(i, &w, &mut power_vecs[i], &mut ops);
                lambda_p_bound(n, k, i_count, prob.tasks[i].users.len())
            })
            .collect();
        let l_p = (0..i_count).map(|i| prob.lipschitz_p(i)).collect();
        let l_delta = (0..i_count).map(|i| prob.lipschitz_delta(i)).collect();
        let dz_parts: Vec<Vec<f64>> = (0..i_count).map(|i| prob.col_apply(i, &w, &x_p, &mut ops)).collect();
        let gx_parts: Vec<Vec<f64>> = (0..i_count).map(|i| prob.col_apply_unmasked(i, &x_p, &mut ops)).collect();
        let dz = sum_parts(&dz_parts, k);
        let gx = sum_parts(&gx_parts, k);
        let state = AccelState {
            y_p: x_p.clone(),
            y_delta: x_delta.clone(),
            z_p: x_p.clone(),
            z_delta: x_delta.clone(),
            x_p,
            x_delta,
            alpha: vec![1.0 / k as f64; k],
            beta: 1.0,
            theta: 1.0,
            mu: 1.0,
            iter: 0,
            w,
            nu: prob.tasks.iter().map(|t| t.nu).collect(),
            lambda_p,
            l_p,
            l_delta,
        };
        AccelSolver {
            counts: OpCounts::new(i_count),
            prob,
            state,
            dx_parts: dz_parts.clone(),
            dx: dz.clone(),
            dz_parts,
            gx_parts,
            dz,
            gx,
            power_vecs,
            trace: Vec::new(),
            last_mse: f64::INFINITY,
            converged: false,
            start: Instant::now(),
        }
    }

    pub fn problem(&self) -> &Problem {
        &self.prob
    }

    pub fn state(&self) -> &AccelState {
        &self.state
    }

    pub fn counts(&self) -> &OpCounts {
        &self.counts
    }

    /// P_i evaluated on z_p.
    pub fn eliminated_pi(&self, i: usize) -> f64 {
        let st = &self.state;
        let own: f64 = self.prob.tasks[i].users.iter().map(|&k| st.z_p[k]).sum();
        own - (st.z_p.iter().sum::<f64>() - 1.0) / self.prob.num_tasks() as f64
    }

    /// z_i evaluated on (z_p, z_δ).
    pub fn eliminated_zi(&self, i: usize) -> Vec<f64> {
        let inv = 1.0 / self.prob.num_tasks() as f64;
        (0..self.prob.k)
            .map(|k| self.dz_parts[i][k] - (self.dz[k] - self.state.z_delta[k] + self.prob.sigma2) * inv)
            .collect()
    }

    /// Bracket of the p-block closed form at the current state, for the
    /// extrapolated powers `y_p` of task `i`.
    fn p_bracket(&self, i: usize, y_p: &[f64], coef: &[f64], ops: &mut u64) -> Vec<f64> {
        let st = &self.state;
        let t = &self.prob.tasks[i];
        let mut py = st.x_p.clone();
        for (j, &k) in t.users.iter().enumerate() {
            py[k] = y_p[j];
        }
        *ops += self.prob.k as u64;
        let gphi = self.prob.grad_phi_p(i, &py, &st.x_delta, &st.w);
        *ops += t.users.len() as u64;
        let ct = self.prob.col_t_apply(i, &st.w, coef, ops);
        let shift = st.beta + st.mu * (st.z_p.iter().sum::<f64>() - 1.0) / self.prob.num_tasks() as f64;
        gphi.iter().zip(&ct).map(|(g, c)| t.lambda * g + c + shift).collect()
    }

    fn coef(&self) -> Vec<f64> {
        let st = &self.state;
        let c = st.mu / self.prob.num_tasks() as f64;
        (0..self.prob.k).map(|k| st.alpha[k] + c * (self.dz[k] - st.z_delta[k] + self.prob.sigma2)).collect()
    }

    /// Unprojected p-block minimizer z̃_{p_i} at the current state.
    pub fn z_p_closed_form(&self, i: usize) -> Vec<f64> {
        let st = &self.state;
        let users = &self.prob.tasks[i].users;
        let x: Vec<f64> = users.iter().map(|&k| st.x_p[k]).collect();
        let z: Vec<f64> = users.iter().map(|&k| st.z_p[k]).collect();
        let y = extrapolate(&x, &z, st.theta);
        let mut ops = 0;
        let br = self.p_bracket(i, &y, &self.coef(), &mut ops);
        let den = st.l_p[i] * st.theta + st.mu * st.lambda_p[i];
        z.iter().zip(&br).map(|(zz, b)| zz - b / den).collect()
    }

    /// Quadratic surrogate of the p-block around z_{p_i}, evaluated at `u`.
    pub fn p_surrogate(&self, i: usize, u: &[f64]) -> f64 {
        let st = &self.state;
        let users = &self.prob.tasks[i].users;
        let x: Vec<f64> = users.iter().map(|&k| st.x_p[k]).collect();
        let z: Vec<f64> = users.iter().map(|&k| st.z_p[k]).collect();
        let y = extrapolate(&x, &z, st.theta);
        let mut ops = 0;
        let br = self.p_bracket(i, &y, &self.coef(), &mut ops);
        let den = st.l_p[i] * st.theta + st.mu * st.lambda_p[i];
        let mut lin = 0.0;
        let mut sq = 0.0;
        for j in 0..users.len() {
            let d = u[j] - z[j];
            lin += br[j] * d;
            sq += d * d;
        }
        lin + 0.5 * den * sq
    }

    fn task_update(&self, i: usize, coef: &[f64]) -> TaskUpdate {
        let prob = &self.prob;
        let st = &self.state;
        let t = &prob.tasks[i];
        let users = &t.users;
        let n = users.len();
        let inv = 1.0 / prob.num_tasks() as f64;
        let th = st.theta;
        let mut ops = 0u64;

        let pick = |v: &[f64]| -> Vec<f64> { users.iter().map(|&k| v[k]).collect() };
        let (xp, xd, zp, zd, w_old) = (pick(&st.x_p), pick(&st.x_delta), pick(&st.z_p), pick(&st.z_delta), pick(&st.w));
        let y_p = extrapolate(&xp, &zp, th);
        let y_d = extrapolate(&xd, &zd, th);
        ops += 4 * n as u64;

        let br = self.p_bracket(i, &y_p, coef, &mut ops);
        let den_p = st.l_p[i] * th + st.mu * st.lambda_p[i];
        let nu_p = prob.opts.nu_power;
        let z_p: Vec<f64> = (0..n)
            .map(|j| (zp[j] - br[j] / den_p - nu_p * (1.0 - w_old[j])).max(0.0))
            .collect();
        let x_p = extrapolate(&xp, &z_p, th);

        let mut pd = st.x_p.clone();
        let mut dy = st.x_delta.clone();
        for (j, &k) in users.iter().enumerate() {
            pd[k] = x_p[j];
            dy[k] = y_d[j];
        }
        ops += 2 * prob.k as u64;
        let gd = prob.grad_phi_delta(i, &pd, &dy, &st.w);
        let den_d = st.l_delta[i] * th + st.mu * LAMBDA_DELTA;
        let z_d: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let b = t.lambda * gd[j] - st.alpha[k] - st.mu * (self.dz[k] - zd[j] + prob.sigma2);
                (zd[j] - b / den_d).max(prob.sigma2)
            })
            .collect();
        let x_d = extrapolate(&xd, &z_d, th);
        ops += 4 * n as u64;

        let mut zmix = st.z_p.clone();
        let mut xmix = st.x_p.clone();
        for (j, &k) in users.iter().enumerate() {
            zmix[k] = z_p[j];
            xmix[k] = x_p[j];
        }
        ops += 2 * prob.k as u64;
        let own_z = prob.col_apply(i, &st.w, &zmix, &mut ops);
        let alpha: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let dzmix = self.dz[k] - self.dz_parts[i][k] + own_z[k];
                st.alpha[k] + st.mu * inv * (dzmix + prob.sigma2 - z_d[j])
            })
            .collect();

        let mut w_new = w_old.clone();
        let mut nu = st.nu[i];
        let mut own_x = None;
        if prob.opts.scheduling {
            let ox = prob.col_apply(i, &st.w, &xmix, &mut ops);
            let dxmix: Vec<f64> = users.iter().map(|&k| self.dx[k] - self.dx_parts[i][k] + ox[k]).collect();
            let interference =
                schedule_interference(prob, i, &st.w, &xmix, &dxmix, &self.gx, &self.gx_parts[i], &mut ops);
            let signal: Vec<f64> = users.iter().zip(&x_p).map(|(&k, x)| prob.gdiag[k] * x).collect();
            let eps = prob.opts.epsilon_floor;
            let mut sweeps = 0u64;
            let mut sweep = |nu: f64| {
                sweeps += 1;
                (0..n).map(|j| relaxed_weight(w_old[j], signal[j], interference[j], nu, eps)).collect()
            };
            let first = sweep(nu);
            let out = enforce_cap(first, t.cap, nu, eps, &mut sweep);
            ops += sweeps * n as u64;
            w_new = out.segment;
            pin_leader(&mut w_new);
            nu = out.nu;
            own_x = Some(ox);
        }

        let changed = w_new != w_old;
        let mut power_vec = self.power_vecs[i].clone();
        let (dz_part, dx_part, lambda_p) = if changed {
            let mut w = st.w.clone();
            for (j, &k) in users.iter().enumerate() {
                w[k] = w_new[j];
            }
            let dz_part = prob.col_apply(i, &w, &zmix, &mut ops);
            let dx_part = prob.col_apply(i, &w, &xmix, &mut ops);
            let norm = prob.col_norm(i, &w, &mut power_vec, &mut ops);
            (dz_part, dx_part, lambda_p_bound(norm, prob.k, prob.num_tasks(), n))
        } else {
            let dx_part = match own_x {
                Some(v) => v,
                None => prob.col_apply(i, &st.w, &xmix, &mut ops),
            };
            (own_z, dx_part, st.lambda_p[i])
        };
        let gx_part = prob.col_apply_unmasked(i, &xmix, &mut ops);

        TaskUpdate {
            y_p,
            y_d,
            x_p,
            x_d,
            z_p,
            z_d,
            alpha,
            w: w_new,
            nu: vec![nu],
            lambda_p,
            power_vec,
            dz_part,
            dx_part,
            gx_part,
            ops,
        }
    }

    pub fn step(&mut self) -> Result<StepOutcome, SolverError> {
        let i_count = self.prob.num_tasks();
        let k = self.prob.k;
        let coef = self.coef();
        let updates: Vec<TaskUpdate> = (0..i_count).into_par_iter().map(|i| self.task_update(i, &coef)).collect();

        let finite = updates
            .iter()
            .all(|u| u.x_p.iter().chain(&u.x_d).chain(&u.z_p).chain(&u.z_d).chain(&u.alpha).all(|x| x.is_finite()));
        if !finite {
            return Err(SolverError::NonFinite {
                iter: self.state.iter + 1,
                detail: "accelerated register or dual".into(),
            });
        }

        let xp_prev = self.state.x_p.clone();
        let xd_prev = self.state.x_delta.clone();
        let mut red = 3 * k as u64;
        for (i, u) in updates.into_iter().enumerate() {
            let users = &self.prob.tasks[i].users;
            let st = &mut self.state;
            for (j, &kk) in users.iter().enumerate() {
                st.y_p[kk] = u.y_p[j];
                st.y_delta[kk] = u.y_d[j];
                st.x_p[kk] = u.x_p[j];
                st.x_delta[kk] = u.x_d[j];
                st.z_p[kk] = u.z_p[j];
                st.z_delta[kk] = u.z_d[j];
                st.alpha[kk] = u.alpha[j];
                st.w[kk] = u.w[j];
            }
            st.nu[i] = u.nu[0];
            st.lambda_p[i] = u.lambda_p;
            self.power_vecs[i] = u.power_vec;
            self.dz_parts[i] = u.dz_part;
            self.dx_parts[i] = u.dx_part;
            self.gx_parts[i] = u.gx_part;
            self.counts.per_task[i] += u.ops;
        }
        self.dz = sum_parts(&self.dz_parts, k);
        self.dx = sum_parts(&self.dx_parts, k);
        self.gx = sum_parts(&self.gx_parts, k);
        red += 3 * (k * i_count) as u64;

        let st = &mut self.state;
        let sum_z: f64 = st.z_p.iter().sum();
        st.beta = step_dual_beta(st.beta, st.mu, i_count, sum_z);
        st.theta = theta_next(st.theta);
        st.mu = 1.0 / st.theta;
        let m = mse_from_parts(&st.x_p, &xp_prev, &st.x_delta, &xd_prev, &self.gx, self.prob.sigma2);
        red += 5 * k as u64;
        self.counts.reduction += red;
        self.counts.iterations += 1;
        st.iter += 1;

        let sum_x: f64 = st.x_p.iter().sum();
        let row = TraceRow {
            iter: st.iter,
            mse: m,
            objective: iterate_objective(&self.prob, &st.x_p, &st.w),
            power_residual: (sum_x - 1.0).abs(),
            coupling_residual: norm2(self.gx.iter().zip(&st.x_delta).map(|(g, d)| g + self.prob.sigma2 - d)),
            active_users: count_active(&st.w),
            wall_time_ns: elapsed_ns(self.start),
            theta: Some(st.theta),
        };
        self.trace.push(row.clone());
        self.last_mse = m;
        self.converged = m <= self.prob.opts.epsilon_tol;
        let done = self.converged || st.iter >= self.prob.opts.max_iters;
        Ok(StepOutcome { row, done })
    }

    pub fn finish(self) -> Solution {
        let (p_hat, mask) = finalize_power(&self.prob, &self.state.x_p, &self.state.w);
        let objective = learning::weighted_objective(&self.prob.scenario, &self.prob.gains, &p_hat, &mask);
        Solution {
            method: Method::Accelerated,
            p_hat,
            mask,
            relaxed_mask: self.state.w.clone(),
            delta: self.prob.delta_to_mw(&self.state.x_delta),
            objective,
            iterations: self.state.iter,
            final_mse: self.last_mse,
            converged: self.converged,
            nu_final: self.state.nu.clone(),
            counts: self.counts,
            eta: None,
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

pub fn run(scenario: &Scenario, gains: &GainMatrix) -> Result<Solution, SolverError> {
    AccelSolver::new(scenario, gains).run_with(&mut |_| {})
}

pub fn run_with(
    scenario: &Scenario,
    gains: &GainMatrix,
    observer: &mut dyn FnMut(&TraceRow),
) -> Result<Solution, SolverError> {
    AccelSolver::new(scenario, gains).run_with(observer)
}
