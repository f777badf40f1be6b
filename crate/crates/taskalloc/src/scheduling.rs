//! Closed-form relaxed scheduling weights, rounding and the per-task cap.

use crate::channel::GainMatrix;
use crate::config::WeightConvention;

/// Relaxed weights in [ε, 1] for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleMask {
    pub relaxed: Vec<f64>,
}

impl ScheduleMask {
    pub fn all_active(k: usize) -> ScheduleMask {
        ScheduleMask { relaxed: vec![1.0; k] }
    }

    pub fn binary(&self) -> Vec<f64> {
        round_mask(&self.relaxed)
    }

    pub fn active_in(&self, users: &[usize]) -> usize {
        users.iter().filter(|&&k| is_active(self.relaxed[k])).count()
    }
}

#[inline]
pub fn is_active(w: f64) -> bool {
    w >= 0.5
}

/// Entrywise threshold at 0.5, ties rounding up.
pub fn round_mask(w: &[f64]) -> Vec<f64> {
    w.iter().map(|&x| if is_active(x) { 1.0 } else { 0.0 }).collect()
}

/// Interference-plus-noise δ_k under the chosen weight convention.
pub fn schedule_interference(
    k: usize,
    p: &[f64],
    g: &GainMatrix,
    w: &[f64],
    sigma2: f64,
    conv: WeightConvention,
) -> f64 {
    let row = g.row(k);
    let mut s = 0.0;
    for l in 0..g.k {
        if l != k {
            s += match conv {
                WeightConvention::Interferer => w[l] * row[l] * p[l],
                WeightConvention::Victim => row[l] * p[l],
            };
        }
    }
    match conv {
        WeightConvention::Interferer => s + sigma2,
        WeightConvention::Victim => w[k] * s + sigma2,
    }
}

/// Weight update from the direct signal `signal = G_kk p_k`, the current
/// weight and interference `delta`; clamped to [ε, 1].
#[inline]
pub fn relaxed_weight(w_k: f64, signal: f64, delta: f64, nu: f64, eps: f64) -> f64 {
    let den = delta * ((signal / (delta + signal) + nu).exp() - 1.0);
    let v = if den > 0.0 { w_k * signal / den } else { eps };
    if v.is_nan() {
        eps
    } else {
        v.clamp(eps, 1.0)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn schedule_update(
    k: usize,
    p: &[f64],
    g: &GainMatrix,
    w: &[f64],
    nu: f64,
    eps: f64,
    sigma2: f64,
    conv: WeightConvention,
) -> f64 {
    let delta = schedule_interference(k, p, g, w, sigma2, conv);
    relaxed_weight(w[k], g.direct(k) * p[k], delta, nu, eps)
}

pub fn count_active(segment: &[f64]) -> usize {
    segment.iter().filter(|&&x| is_active(x)).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapOutcome {
    pub segment: Vec<f64>,
    pub nu: f64,
    pub doublings: u32,
    /// The doubling budget ran out and only the N_i largest weights were kept.
    pub truncated: bool,
}

pub const MAX_DOUBLINGS: u32 = 32;

/// Doubles ν_i until at most `cap` weights round to one, recomputing the
/// segment with `sweep(ν)`; after 32 doublings keeps the `cap` largest
/// weights (ties by position) and sets the rest to ε.
pub fn enforce_cap(
    segment: Vec<f64>,
    cap: usize,
    nu: f64,
    eps: f64,
    mut sweep: impl FnMut(f64) -> Vec<f64>,
) -> CapOutcome {
    let mut seg = segment;
    let mut nu = nu;
    let mut doublings = 0;
    while count_active(&seg) > cap && doublings < MAX_DOUBLINGS {
        nu *= 2.0;
        doublings += 1;
        seg = sweep(nu);
    }
    let mut truncated = false;
    if count_active(&seg) > cap {
        let mut order: Vec<usize> = (0..seg.len()).collect();
        order.sort_by(|&a, &b| seg[b].total_cmp(&seg[a]).then(a.cmp(&b)));
        for &j in &order[cap..] {
            seg[j] = eps;
        }
        truncated = true;
    }
    CapOutcome { segment: seg, nu, doublings, truncated }
}

/// Keeps a task from losing its last active user: when at most one weight
/// rounds to one, the largest weight is set to 1.
pub fn pin_leader(segment: &mut [f64]) {
    if segment.is_empty() || count_active(segment) > 1 {
        return;
    }
    let mut best = 0;
    for j in 1..segment.len() {
        if segment[j] > segment[best] {
            best = j;
        }
    }
    segment[best] = 1.0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_mask(&[0.5]), vec![1.0]);
        assert_eq!(round_mask(&[0.4999]), vec![0.0]);
        assert_eq!(round_mask(&[1e-6, 1.0, 0.5]), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_power_gets_floor() {
        assert_eq!(relaxed_weight(1.0, 0.0, 1.0, 0.1, 1e-6), 1e-6);
    }

    #[test]
    fn strong_user_with_small_penalty_saturates() {
        for snr in [1e3, 1e4, 1e6] {
            for nu in [1e-6, 1e-4, 1e-3] {
                assert_eq!(relaxed_weight(1.0, snr, 1.0, nu, 1e-6), 1.0);
            }
        }
    }

    #[test]
    fn cap_noop_when_satisfied() {
        let out = enforce_cap(vec![1.0, 0.2], 1, 0.1, 1e-6, |_| unreachable!());
        assert_eq!(out.segment, vec![1.0, 0.2]);
        assert_eq!(out.nu, 0.1);
        assert_eq!(out.doublings, 0);
    }

    #[test]
    fn cap_fallback_keeps_largest() {
        let out = enforce_cap(vec![0.7, 0.9], 1, 0.1, 1e-6, |_| vec![0.7, 0.9]);
        assert!(out.truncated);
        assert_eq!(out.segment, vec![1e-6, 0.9]);
        assert_eq!(out.doublings, MAX_DOUBLINGS);
    }

    #[test]
    fn pin_rule() {
        let mut s = vec![0.1, 0.3, 0.2];
        pin_leader(&mut s);
        assert_eq!(s, vec![0.1, 1.0, 0.2]);
        let mut s = vec![0.6, 0.7, 0.2];
        pin_leader(&mut s);
        assert_eq!(s, vec![0.6, 0.7, 0.2]);
    }
}
