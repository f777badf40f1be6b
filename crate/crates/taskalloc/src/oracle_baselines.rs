//! Brute-force grid oracle, equal-power and sum-rate baselines.

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::GainMatrix;
use crate::config::Scenario;
use crate::learning::{self, rates};
use crate::solution::{Method, OpCounts, Solution};

pub const MAX_ORACLE_USERS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("grid oracle is limited to K <= {MAX_ORACLE_USERS} users, scenario has {0}")]
    TooManyUsers(usize),
    #[error("grid resolution must be at least 1")]
    ZeroResolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub p_best: Vec<f64>,
    pub objective_best: f64,
    pub resolution: usize,
    pub evaluations: u64,
    /// Grid counts n_k of the minimizer (p_k = n_k·P/resolution).
    pub index: Vec<usize>,
    /// Largest objective change from the minimizer to a neighbouring grid
    /// point (one unit of power moved between two users).
    pub gap_bound: f64,
}

/// All compositions of `total` into `parts` nonnegative counts, lexicographic.
fn compositions(parts: usize, total: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(parts - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn grid_power(n: &[usize], p_tot: f64, res: usize) -> Vec<f64> {
    n.iter().map(|&c| c as f64 * p_tot / res as f64).collect()
}

/// Exhaustive search over {p : p_k = n_k·P/res, Σn_k = res} with every user
/// active. Ties go to the lexicographically smallest grid index.
pub fn grid_oracle(s: &Scenario, g: &GainMatrix, resolution: usize) -> Result<OracleResult, OracleError> {
    let k = s.num_users();
    if k > MAX_ORACLE_USERS {
        return Err(OracleError::TooManyUsers(k));
    }
    if resolution == 0 {
        return Err(OracleError::ZeroResolution);
    }
    let p_tot = s.network.total_power;
    let ones = vec![1.0; k];
    let eval = |n: &[usize]| learning::weighted_objective(s, g, &grid_power(n, p_tot, resolution), &ones).total;

    let points = compositions(k, resolution);
    let evaluations = points.len() as u64;
    let (best_i, best_f) = points
        .par_iter()
        .enumerate()
        .map(|(i, n)| (i, eval(n)))
        .reduce(
            || (usize::MAX, f64::INFINITY),
            |a, b| match a.1.total_cmp(&b.1) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    let index = points[best_i].clone();

    let mut gap: f64 = 0.0;
    for from in 0..k {
        for to in 0..k {
            if from != to && index[from] > 0 {
                let mut n = index.clone();
                n[from] -= 1;
                n[to] += 1;
                gap = gap.max((eval(&n) - best_f).abs());
            }
        }
    }

    Ok(OracleResult {
        p_best: grid_power(&index, p_tot, resolution),
        objective_best: best_f,
        resolution,
        evaluations,
        index,
        gap_bound: gap,
    })
}

pub fn equal_power(s: &Scenario) -> Vec<f64> {
    let k = s.num_users();
    vec![s.network.total_power / k as f64; k]
}

/// Euclidean projection of `v` onto {x ⪰ 0, Σx = total}.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (j, &x) in u.iter().enumerate() {
        css += x;
        let t = (css - total) / (j + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

pub fn sum_rate(g: &GainMatrix, p: &[f64], sigma2: f64) -> f64 {
    rates(p, g, &vec![1.0; g.k], sigma2).iter().sum()
}

/// ∂/∂p_j Σ_k R_k with all users active.
fn sum_rate_grad(g: &GainMatrix, p: &[f64], sigma2: f64) -> Vec<f64> {
    let k = g.k;
    let ln2 = std::f64::consts::LN_2;
    let mut grad = vec![0.0; k];
    for a in 0..k {
        let interf = learning::interference(a, p, g, &vec![1.0; k], sigma2);
        let total = interf + g.direct(a) * p[a];
        grad[a] += g.direct(a) / (total * ln2);
        // d/dp_l of log2(total) − log2(interf) for l ≠ a
        let c = 1.0 / (total * ln2) - 1.0 / (interf * ln2);
        for (l, gl) in grad.iter_mut().enumerate() {
            if l != a {
                *gl += c * g.get(a, l);
            }
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumRateResult {
    pub p: Vec<f64>,
    pub sum_rate: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient ascent on the sum rate over the power simplex, from
/// equal power, with backtracking on the step.
pub fn sumrate_baseline(s: &Scenario, g: &GainMatrix, max_iters: usize, tol: f64) -> SumRateResult {
    let p_tot = s.network.total_power;
    let sigma2 = s.network.noise_power;
    let mut p = equal_power(s);
    let mut f = sum_rate(g, &p, sigma2);
    let mut step = p_tot;
    for it in 1..=max_iters {
        let grad = sum_rate_grad(g, &p, sigma2);
        let gscale = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gscale == 0.0 {
            return SumRateResult { p, sum_rate: f, iterations: it, converged: true };
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let cand: Vec<f64> = p.iter().zip(&grad).map(|(x, d)| x + t / gscale * d).collect();
            let q = project_simplex(&cand, p_tot);
            let fq = sum_rate(g, &q, sigma2);
            if fq >= f {
                accepted = Some((q, fq));
                break;
            }
            t *= 0.5;
        }
        let Some((q, fq)) = accepted else {
            return SumRateResult { p, sum_rate: f, iterations: it, converged: true };
        };
        let moved = q.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        p = q;
        f = fq;
        step = (t * 2.0).min(p_tot);
        if moved <= tol * p_tot {
            return SumRateResult { p, sum_rate: f, iterations: it, converged: true };
        }
    }
    SumRateResult { p, sum_rate: f, iterations: max_iters, converged: false }
}

/// Wraps a fixed all-active power vector as a [`Solution`].
pub fn baseline_solution(s: &Scenario, g: &GainMatrix, method: Method, p: Vec<f64>, iterations: usize, converged: bool) -> Solution {
    let k = s.num_users();
    let mask = vec![1.0; k];
    let objective = learning::weighted_objective(s, g, &p, &mask);
    Solution {
        method,
        p_hat: p,
        relaxed_mask: mask.clone(),
        mask,
        delta: Vec::new(),
        objective,
        trace: Vec::new(),
        converged,
        iterations,
        final_mse: 0.0,
        nu_final: s.tasks.iter().map(|t| t.nu).collect(),
        counts: OpCounts::new(s.num_tasks()),
        eta: None,
    }
}
