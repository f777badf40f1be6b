//! The scaled problem both solvers iterate on.
//!
//! Powers are measured in units of the budget P (so the budget is 1) and
//! interference in units of s = max(σ², P·max_{k≠ℓ} G_kℓ). The learning-error
//! scale a_i is multiplied by `objective_scale / f_eq`, where f_eq is the
//! physical objective at equal power, so the scaled objective starts at
//! `objective_scale`. SINRs, and therefore the minimizers, are unchanged.

use crate::channel::GainMatrix;
use crate::config::{task_weights, Scenario, SolverOptions};
use crate::learning::{self, ErrorModel};

#[derive(Debug, Clone)]
pub struct TaskBlock {
    pub users: Vec<usize>,
    pub model: ErrorModel,
    pub lambda: f64,
    pub cap: usize,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub scenario: Scenario,
    pub gains: GainMatrix,
    pub k: usize,
    pub tasks: Vec<TaskBlock>,
    /// Scaled gains G·P/s, row-major.
    pub g: GainMatrix,
    /// Transpose of `g`, row-major.
    pub gt: Vec<f64>,
    pub gdiag: Vec<f64>,
    pub sigma2: f64,
    pub bt: f64,
    /// mW per scaled power unit (P).
    pub power_unit: f64,
    /// mW per scaled interference unit (s).
    pub interference_unit: f64,
    /// Physical objective per scaled objective unit.
    pub objective_unit: f64,
    pub opts: SolverOptions,
    /// Penalty cap in effect: the configured one, or [`Problem::mu_cap`].
    pub mu_max: f64,
}

impl Problem {
    pub fn new(scenario: &Scenario, gains: &GainMatrix) -> Problem {
        let k = scenario.num_users();
        assert_eq!(gains.k, k, "gain matrix size must match the scenario");
        let net = &scenario.network;
        let p_tot = net.total_power;
        let s = net.noise_power.max(p_tot * gains.max_cross());
        let g = GainMatrix { k, g: gains.g.iter().map(|x| x * p_tot / s).collect() };
        let mut gt = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                gt[b * k + a] = g.get(a, b);
            }
        }
        let gdiag = g.diag();
        let eq = vec![p_tot / k as f64; k];
        let f_eq = learning::weighted_objective(scenario, gains, &eq, &vec![1.0; k]).total;
        let scale = scenario.solver.objective_scale / f_eq;
        let lambda = task_weights(&scenario.tasks).expect("validated scenario has positive weights");
        let tasks = scenario
            .tasks
            .iter()
            .zip(lambda)
            .map(|(t, lambda)| TaskBlock {
                users: t.user_ids.clone(),
                model: ErrorModel::from(t).scaled(scale),
                lambda,
                cap: t.max_active,
                nu: t.nu,
            })
            .collect();
        let mut prob = Problem {
            scenario: scenario.clone(),
            gains: gains.clone(),
            k,
            tasks,
            g,
            gt,
            gdiag,
            sigma2: net.noise_power / s,
            bt: net.bandwidth * net.transmit_time,
            power_unit: p_tot,
            interference_unit: s,
            objective_unit: 1.0 / scale,
            opts: scenario.solver.clone(),
            mu_max: 0.0,
        };
        prob.mu_max = scenario.solver.mu_max.unwrap_or_else(|| prob.mu_cap());
        prob
    }

    /// Largest μ for which the penalty part of the p-step stays a
    /// contraction: with c = μ/I the penalty Hessian is c(ΔᵀΔ + 11ᵀ), so
    /// η·c·(‖Δ‖₂² + K) = 1.
    pub fn mu_cap(&self) -> f64 {
        let spread = cross_norm_sq(&self.g) + self.k as f64;
        self.num_tasks() as f64 / (self.opts.eta * spread)
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn equal_power(&self) -> Vec<f64> {
        vec![1.0 / self.k as f64; self.k]
    }

    /// (G − D)p + σ².
    pub fn true_delta(&self, p: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|a| {
                let row = self.g.row(a);
                let mut s = 0.0;
                for b in 0..self.k {
                    if a != b {
                        s += row[b] * p[b];
                    }
                }
                s + self.sigma2
            })
            .collect()
    }

    /// Scaled objective Σ λ_i Φ̃_i with true masked interference.
    pub fn objective(&self, p: &[f64], w: &[f64]) -> f64 {
        let delta: Vec<f64> = (0..self.k).map(|a| learning::interference(a, p, &self.g, w, self.sigma2)).collect();
        self.tasks
            .iter()
            .map(|t| t.lambda * learning::phi(&t.model, self.bt, &t.users, &self.gdiag, w, p, &delta))
            .sum()
    }

    /// Scaled objective Σ λ_i Φ̃_i(p | δ).
    pub fn phi_total(&self, p: &[f64], delta: &[f64], w: &[f64]) -> f64 {
        self.tasks
            .iter()
            .map(|t| t.lambda * learning::phi(&t.model, self.bt, &t.users, &self.gdiag, w, p, delta))
            .sum()
    }

    pub fn grad_phi_p(&self, i: usize, p: &[f64], delta: &[f64], w: &[f64]) -> Vec<f64> {
        let t = &self.tasks[i];
        learning::grad_phi_p(&t.model, self.bt, &t.users, &self.gdiag, w, p, delta)
    }

    pub fn grad_phi_delta(&self, i: usize, p: &[f64], delta: &[f64], w: &[f64]) -> Vec<f64> {
        let t = &self.tasks[i];
        learning::grad_phi_delta(&t.model, self.bt, &t.users, &self.gdiag, w, p, delta)
    }

    /// Empirical L_p of Φ̃_i around the equal-power start.
    pub fn lipschitz_p(&self, i: usize) -> f64 {
        let t = &self.tasks[i];
        let p0 = self.equal_power();
        let d0 = self.true_delta(&p0);
        let w = vec![1.0; self.k];
        let seed = self.scenario.seed ^ (0x4c69_7073_6368_0000 + i as u64);
        learning::lipschitz_p(
            &t.model,
            self.bt,
            &t.users,
            &self.gdiag,
            &w,
            &p0,
            &d0,
            1.0,
            self.opts.lipschitz_samples,
            seed,
        )
    }

    /// Bounds (u_0, U_0) for task `i`: Φ̃_i at equal power and max_k G_kk·P.
    pub fn lipschitz_bounds(&self, i: usize) -> (f64, f64) {
        let t = &self.tasks[i];
        let p0 = self.equal_power();
        let d0 = self.true_delta(&p0);
        let w = vec![1.0; self.k];
        let u0 = learning::phi(&t.model, self.bt, &t.users, &self.gdiag, &w, &p0, &d0);
        let big_u0 = self.gdiag.iter().cloned().fold(0.0, f64::max);
        (u0, big_u0)
    }

    /// Closed-form L_δ of Φ̃_i.
    pub fn lipschitz_delta(&self, i: usize) -> f64 {
        let t = &self.tasks[i];
        let (u0, big_u0) = self.lipschitz_bounds(i);
        learning::lipschitz_delta(&t.model, self.bt, t.users.len(), self.k, self.num_tasks(), u0, big_u0, self.sigma2)
    }

    /// Physical power vector from scaled powers.
    pub fn to_mw(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x * self.power_unit).collect()
    }

    /// Physical δ from scaled δ.
    pub fn delta_to_mw(&self, d: &[f64]) -> Vec<f64> {
        d.iter().map(|x| x * self.interference_unit).collect()
    }

    /// Δ(:,K_i)x: out_k = Σ_{ℓ∈K_i, ℓ≠k} G_kℓ w̃_ℓ x_ℓ. Adds K|K_i| to `ops`.
    pub fn col_apply(&self, i: usize, w: &[f64], x: &[f64], ops: &mut u64) -> Vec<f64> {
        let users = &self.tasks[i].users;
        let mut out = vec![0.0; self.k];
        for (a, o) in out.iter_mut().enumerate() {
            let row = self.g.row(a);
            let mut s = 0.0;
            for &l in users {
                if l != a {
                    s += row[l] * w[l] * x[l];
                }
            }
            *o = s;
        }
        *ops += (self.k * users.len()) as u64;
        out
    }

    /// (G − D)(:,K_i)x. Adds K|K_i| to `ops`.
    pub fn col_apply_unmasked(&self, i: usize, x: &[f64], ops: &mut u64) -> Vec<f64> {
        let users = &self.tasks[i].users;
        let mut out = vec![0.0; self.k];
        for (a, o) in out.iter_mut().enumerate() {
            let row = self.g.row(a);
            let mut s = 0.0;
            for &l in users {
                if l != a {
                    s += row[l] * x[l];
                }
            }
            *o = s;
        }
        *ops += (self.k * users.len()) as u64;
        out
    }

    /// Δ(:,K_i)ᵀv, one entry per task user. Adds K|K_i| to `ops`.
    pub fn col_t_apply(&self, i: usize, w: &[f64], v: &[f64], ops: &mut u64) -> Vec<f64> {
        let users = &self.tasks[i].users;
        let out = users
            .iter()
            .map(|&l| {
                let col = &self.gt[l * self.k..(l + 1) * self.k];
                let mut s = 0.0;
                for (a, (&c, &va)) in col.iter().zip(v).enumerate() {
                    if a != l {
                        s += c * va;
                    }
                }
                w[l] * s
            })
            .collect();
        *ops += (self.k * users.len()) as u64;
        out
    }

    /// ‖Δ(:,K_i)‖₂ by power iteration on ΔᵀΔ, warm-started from `v`.
    pub fn col_norm(&self, i: usize, w: &[f64], v: &mut Vec<f64>, ops: &mut u64) -> f64 {
        let users = &self.tasks[i].users;
        let n = users.len();
        if v.len() != n || v.iter().all(|&x| x == 0.0) {
            *v = vec![1.0 / (n as f64).sqrt(); n];
        }
        let mut full = vec![0.0; self.k];
        let mut est = 0.0;
        for _ in 0..200 {
            for (j, &l) in users.iter().enumerate() {
                full[l] = v[j];
            }
            let u = self.col_apply(i, w, &full, ops);
            let next = self.col_t_apply(i, w, &u, ops);
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let new_est = norm.sqrt();
            *v = next.iter().map(|x| x / norm).collect();
            let done = (new_est - est).abs() <= 1e-13 * new_est;
            est = new_est;
            if done {
                break;
            }
        }
        est
    }
}

/// ‖G − D‖₂² by power iteration on (G − D)ᵀ(G − D).
pub fn cross_norm_sq(g: &GainMatrix) -> f64 {
    let k = g.k;
    let apply = |x: &[f64], transpose: bool| -> Vec<f64> {
        (0..k)
            .map(|a| (0..k).filter(|&b| b != a).map(|b| if transpose { g.get(b, a) } else { g.get(a, b) } * x[b]).sum())
            .collect()
    };
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut est = 0.0;
    for _ in 0..500 {
        let next = apply(&apply(&v, false), true);
        let norm = norm2(next.iter().copied());
        if norm == 0.0 {
            return 0.0;
        }
        v = next.iter().map(|x| x / norm).collect();
        let done = (norm - est).abs() <= 1e-13 * norm;
        est = norm;
        if done {
            break;
        }
    }
    est
}

/// Σ_i of per-task K-vectors, summed in task order.
pub fn sum_parts(parts: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for part in parts {
        for (o, x) in out.iter_mut().zip(part) {
            *o += x;
        }
    }
    out
}

pub fn norm2(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum::<f64>().sqrt()
}
