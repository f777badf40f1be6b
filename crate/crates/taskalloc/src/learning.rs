//! Rates, sample counts, the learning-error model and its derivatives.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::channel::GainMatrix;
use crate::config::{task_weights, Scenario, TaskSpec};

#[derive(Debug, Error, PartialEq)]
pub enum LearningError {
    #[error("sample count must be positive, found {0}")]
    NonPositiveSamples(f64),
}

/// log2(1 + x) via log1p.
#[inline]
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Parameters of Θ(D) = a·D^(−b) plus the sample bookkeeping of one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub a: f64,
    pub b: f64,
    pub initial_samples: f64,
    pub bits_per_sample: f64,
}

impl From<&TaskSpec> for ErrorModel {
    fn from(t: &TaskSpec) -> Self {
        ErrorModel { a: t.a, b: t.b, initial_samples: t.initial_samples, bits_per_sample: t.bits_per_sample }
    }
}

impl ErrorModel {
    pub fn scaled(self, c: f64) -> ErrorModel {
        ErrorModel { a: self.a * c, ..self }
    }
}

/// Masked interference plus noise seen by user `k`.
pub fn interference(k: usize, p: &[f64], g: &GainMatrix, w: &[f64], sigma2: f64) -> f64 {
    let row = g.row(k);
    let mut s = 0.0;
    for l in 0..g.k {
        if l != k {
            s += w[l] * row[l] * p[l];
        }
    }
    s + sigma2
}

/// R_k in bits/s/Hz.
pub fn rate(k: usize, p: &[f64], g: &GainMatrix, w: &[f64], sigma2: f64) -> f64 {
    log2_1p(g.direct(k) * p[k] / interference(k, p, g, w, sigma2))
}

pub fn rates(p: &[f64], g: &GainMatrix, w: &[f64], sigma2: f64) -> Vec<f64> {
    (0..g.k).map(|k| rate(k, p, g, w, sigma2)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    Continuous,
    Floored,
}

/// D_i from the rates of the task's users. `bt` is B·T.
pub fn sample_count(rates: &[f64], bt: f64, bits_per_sample: f64, initial_samples: f64, mode: CountMode) -> f64 {
    let mut d = 0.0;
    for &r in rates {
        let x = bt * r / bits_per_sample;
        d += match mode {
            CountMode::Continuous => x,
            CountMode::Floored => x.floor(),
        };
    }
    d + initial_samples
}

pub fn learning_error(a: f64, b: f64, d: f64) -> Result<f64, LearningError> {
    if d > 0.0 {
        Ok(a * d.powf(-b))
    } else {
        Err(LearningError::NonPositiveSamples(d))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub per_task: Vec<f64>,
}

/// Per-task D_i with rates weighted by the mask.
pub fn sample_counts(s: &Scenario, g: &GainMatrix, p: &[f64], w: &[f64], mode: CountMode) -> Vec<f64> {
    let bt = s.network.bandwidth * s.network.transmit_time;
    let r = rates(p, g, w, s.network.noise_power);
    s.tasks
        .iter()
        .map(|t| {
            let rt: Vec<f64> = t.user_ids.iter().map(|&k| w[k] * r[k]).collect();
            sample_count(&rt, bt, t.bits_per_sample, t.initial_samples, mode)
        })
        .collect()
}

/// Σ_i λ_i a_i D_i^(−b_i) with continuous D_i.
pub fn weighted_objective(s: &Scenario, g: &GainMatrix, p: &[f64], w: &[f64]) -> ObjectiveValue {
    let lambda = task_weights(&s.tasks).expect("validated scenario has positive weights");
    let d = sample_counts(s, g, p, w, CountMode::Continuous);
    let per_task: Vec<f64> = s
        .tasks
        .iter()
        .zip(&d)
        .zip(&lambda)
        .map(|((t, &di), &l)| l * t.a * di.powf(-t.b))
        .collect();
    ObjectiveValue { total: per_task.iter().sum(), per_task }
}

/// Continuous D_i from δ in place of the true interference.
fn d_of(m: &ErrorModel, bt: f64, users: &[usize], gdiag: &[f64], w: &[f64], p: &[f64], delta: &[f64]) -> f64 {
    let mut s = 0.0;
    for &k in users {
        s += w[k] * log2_1p(gdiag[k] * p[k] / delta[k]);
    }
    m.initial_samples + bt / m.bits_per_sample * s
}

/// Φ_i(p_i | δ_i). Vectors are full length K and indexed by `users`.
pub fn phi(m: &ErrorModel, bt: f64, users: &[usize], gdiag: &[f64], w: &[f64], p: &[f64], delta: &[f64]) -> f64 {
    m.a * d_of(m, bt, users, gdiag, w, p, delta).powf(-m.b)
}

/// ∇_{p_i}Φ_i, one entry per task user.
pub fn grad_phi_p(
    m: &ErrorModel,
    bt: f64,
    users: &[usize],
    gdiag: &[f64],
    w: &[f64],
    p: &[f64],
    delta: &[f64],
) -> Vec<f64> {
    let d = d_of(m, bt, users, gdiag, w, p, delta);
    let h = m.a * m.b * d.powf(-m.b - 1.0) * bt / (LN_2 * m.bits_per_sample);
    users
        .iter()
        .map(|&k| -h * w[k] * gdiag[k] / (delta[k] + gdiag[k] * p[k]))
        .collect()
}

/// ∇_{δ_i}Φ_i, one entry per task user.
pub fn grad_phi_delta(
    m: &ErrorModel,
    bt: f64,
    users: &[usize],
    gdiag: &[f64],
    w: &[f64],
    p: &[f64],
    delta: &[f64],
) -> Vec<f64> {
    let d = d_of(m, bt, users, gdiag, w, p, delta);
    let h = m.a * m.b * d.powf(-m.b - 1.0) * bt / (LN_2 * m.bits_per_sample);
    users
        .iter()
        .map(|&k| {
            let s = gdiag[k] * p[k];
            h * w[k] * s / (delta[k] * (delta[k] + s))
        })
        .collect()
}

/// Closed-form smoothness constant of Φ_i in δ_i: √|K_i|·L_2 with
/// `u0` bounding Φ_i and `big_u0` bounding G_kk p_k.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_delta(
    m: &ErrorModel,
    bt: f64,
    task_users: usize,
    num_users: usize,
    num_tasks: usize,
    u0: f64,
    big_u0: f64,
    sigma2: f64,
) -> f64 {
    let (a, b, v) = (m.a, m.b, m.bits_per_sample);
    let s2 = sigma2;
    let q = (s2 + big_u0) * (s2 + big_u0);
    let r = u0 / a;
    let first = a * b * bt * big_u0 * (2.0 * s2 + big_u0) / (LN_2 * v * s2 * s2 * q) * r.powf(1.0 + 1.0 / b);
    let second = num_users as f64 * a * b * (b + 1.0) * bt * bt * big_u0 * big_u0
        / (LN_2 * LN_2 * num_tasks as f64 * v * v * s2 * s2 * q)
        * r.powf(1.0 + 2.0 / b);
    (task_users as f64).sqrt() * (first + second)
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Largest sampled ratio ‖∇Φ(x) − ∇Φ(y)‖/‖x − y‖ over the box [0, p_max] for
/// the task's powers, with δ and the other users held at `p`/`delta`.
#[allow(clippy::too_many_arguments)]
pub fn sampled_p_ratio(
    m: &ErrorModel,
    bt: f64,
    users: &[usize],
    gdiag: &[f64],
    w: &[f64],
    p: &[f64],
    delta: &[f64],
    p_max: f64,
    samples: usize,
    rng: &mut ChaCha20Rng,
) -> f64 {
    let mut x = p.to_vec();
    let mut y = p.to_vec();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        for &k in users {
            x[k] = rng.random::<f64>() * p_max;
            y[k] = rng.random::<f64>() * p_max;
        }
        let gx = grad_phi_p(m, bt, users, gdiag, w, &x, delta);
        let gy = grad_phi_p(m, bt, users, gdiag, w, &y, delta);
        let xs: Vec<f64> = users.iter().map(|&k| x[k]).collect();
        let ys: Vec<f64> = users.iter().map(|&k| y[k]).collect();
        let den = dist(&xs, &ys);
        if den > 0.0 {
            worst = worst.max(dist(&gx, &gy) / den);
        }
    }
    worst
}

/// Empirical smoothness constant of Φ_i in p_i: twice the largest sampled
/// gradient-difference ratio.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_p(
    m: &ErrorModel,
    bt: f64,
    users: &[usize],
    gdiag: &[f64],
    w: &[f64],
    p: &[f64],
    delta: &[f64],
    p_max: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    2.0 * sampled_p_ratio(m, bt, users, gdiag, w, p, delta, p_max, samples, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ErrorModel {
        ErrorModel { a: 5.2, b: 0.72, initial_samples: 200.0, bits_per_sample: 324.0 }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn spot_values() {
        // high-precision reference values
        assert!((learning_error(5.2, 0.72, 200.0).unwrap() - 0.114620354351870040).abs() < 1e-15);
        assert!((learning_error(10.34, 1.2, 300.0).unwrap() - 0.0110147598560184991).abs() < 1e-15);
        assert_eq!(learning_error(3.0, 0.0, 17.0).unwrap(), 3.0);
        assert!(learning_error(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn sample_count_cases() {
        assert_eq!(sample_count(&[0.0, 0.0], 1.8e6, 324.0, 200.0, CountMode::Continuous), 200.0);
        let d = sample_count(&[1.0], 180e3 * 10.0, 324.0, 0.0, CountMode::Continuous);
        assert!((d - 5555.555555555556).abs() < 1e-9);
        let f = sample_count(&[1.0], 180e3 * 10.0, 324.0, 0.0, CountMode::Floored);
        assert_eq!(f, 5555.0);
    }

    #[test]
    fn unit_snr_rate() {
        let g = GainMatrix::from_rows(&[vec![2.0]]);
        assert!((rate(0, &[0.5], &g, &[1.0], 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(rate(0, &[0.0], &g, &[1.0], 1.0), 0.0);
    }

    #[test]
    fn phi_at_zero_power() {
        let m = model();
        let v = phi(&m, 1.8e6, &[0, 1], &[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]);
        assert!((v - 5.2 * 200f64.powf(-0.72)).abs() < 1e-15);
    }

    #[test]
    fn masked_user_has_zero_gradient() {
        let m = model();
        let gp = grad_phi_p(&m, 1.8e6, &[0, 1], &[2.0, 3.0], &[0.0, 1.0], &[0.4, 0.6], &[1.0, 1.5]);
        assert_eq!(gp[0], 0.0);
        assert!(gp[1] < 0.0);
        let gd = grad_phi_delta(&m, 1.8e6, &[0, 1], &[2.0, 3.0], &[1.0, 1.0], &[0.0, 0.6], &[1.0, 1.5]);
        assert_eq!(gd[0], 0.0);
        assert!(gd[1] > 0.0);
    }

    #[test]
    fn lipschitz_delta_decreases_with_noise() {
        let m = model();
        let mut prev = f64::INFINITY;
        for e in 0..20 {
            let s2 = 1e-3 * 2f64.powi(e);
            let l = lipschitz_delta(&m, 3.6e6, 4, 8, 2, 0.05, 10.0, s2);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn lipschitz_p_zero_for_constant_phi() {
        let m = ErrorModel { a: 0.0, ..model() };
        let l = lipschitz_p(&m, 1.8e6, &[0, 1], &[2.0, 3.0], &[1.0; 2], &[0.5; 2], &[1.0; 2], 1.0, 100, 3);
        assert_eq!(l, 0.0);
    }
}
