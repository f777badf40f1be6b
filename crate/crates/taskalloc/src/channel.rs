//! Seeded Rayleigh fading and composite channel gains.
//!
//! Every (slot, user) pair draws from its own ChaCha20 stream: the generator is
//! seeded with the run seed and `set_stream((slot << 32) | user)`. Users can
//! therefore be generated in any order or in parallel.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("zero path loss for user {0}")]
    ZeroPathLoss(usize),
    #[error("invalid path loss {value} for user {user}")]
    BadPathLoss { user: usize, value: f64 },
    #[error("need at least one antenna and one user")]
    Empty,
}

/// Unit-variance fading vectors plus per-user path loss.
///
/// `fading[k]` is h̃_k ~ CN(0, I_N). The physical channel is √ρ_k·h̃_k, see
/// [`ChannelSet::vector`]; path loss enters the gains exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub seed: u64,
    pub num_antennas: usize,
    pub fading: Vec<Vec<Complex64>>,
    pub path_loss: Vec<f64>,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.fading.len()
    }

    /// Physical channel h_k = √ρ_k·h̃_k, distributed CN(0, ρ_k I).
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        let s = self.path_loss[k].sqrt();
        self.fading[k].iter().map(|h| h * s).collect()
    }
}

pub fn user_stream(seed: u64, slot: usize, user: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((slot as u64) << 32) | user as u64);
    rng
}

fn draw_fading(seed: u64, slot: usize, user: usize, n: usize) -> Vec<Complex64> {
    let mut rng = user_stream(seed, slot, user);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    loop {
        let h: Vec<Complex64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * scale, im * scale)
            })
            .collect();
        if h.iter().any(|z| z.norm_sqr() > 0.0) {
            return h;
        }
    }
}

/// Draws one slot of fading for `rho.len()` users.
pub fn sample_channels(seed: u64, n: usize, rho: &[f64]) -> Result<ChannelSet, ChannelError> {
    sample_channels_slot(seed, 0, n, rho)
}

pub fn sample_channels_slot(seed: u64, slot: usize, n: usize, rho: &[f64]) -> Result<ChannelSet, ChannelError> {
    if n == 0 || rho.is_empty() {
        return Err(ChannelError::Empty);
    }
    for (user, &value) in rho.iter().enumerate() {
        if value == 0.0 {
            return Err(ChannelError::ZeroPathLoss(user));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(ChannelError::BadPathLoss { user, value });
        }
    }
    let fading = (0..rho.len()).into_par_iter().map(|k| draw_fading(seed, slot, k, n)).collect();
    Ok(ChannelSet { seed, num_antennas: n, fading, path_loss: rho.to_vec() })
}

/// Composite gains G (row-major K×K); the diagonal holds the direct gains D.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub k: usize,
    pub g: Vec<f64>,
}

impl GainMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> GainMatrix {
        let k = rows.len();
        let mut g = Vec::with_capacity(k * k);
        for r in rows {
            assert_eq!(r.len(), k, "gain matrix must be square");
            g.extend_from_slice(r);
        }
        GainMatrix { k, g }
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.g[k * self.k + l]
    }

    #[inline]
    pub fn direct(&self, k: usize) -> f64 {
        self.g[k * self.k + k]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.k).map(|k| self.direct(k)).collect()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.g[k * self.k..(k + 1) * self.k]
    }

    pub fn max_cross(&self) -> f64 {
        let mut m = 0.0f64;
        for k in 0..self.k {
            for l in 0..self.k {
                if k != l {
                    m = m.max(self.get(k, l));
                }
            }
        }
        m
    }

    /// Entrywise arithmetic mean, summed in slot order.
    pub fn mean(slots: &[GainMatrix]) -> GainMatrix {
        let k = slots[0].k;
        let mut g = vec![0.0; k * k];
        for s in slots {
            for (a, b) in g.iter_mut().zip(&s.g) {
                *a += b;
            }
        }
        let m = slots.len() as f64;
        g.iter_mut().for_each(|x| *x /= m);
        GainMatrix { k, g }
    }
}

/// G_kk = ρ_k‖h̃_k‖², G_kℓ = ρ_ℓ|h̃_k^H h̃_ℓ|²/‖h̃_k‖².
pub fn composite_gains(ch: &ChannelSet) -> GainMatrix {
    let k = ch.num_users();
    let norms: Vec<f64> = ch.fading.iter().map(|h| h.iter().map(|z| z.norm_sqr()).sum()).collect();
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|a| {
            (0..k)
                .map(|b| {
                    if a == b {
                        ch.path_loss[a] * norms[a]
                    } else {
                        let ip: Complex64 = ch.fading[a].iter().zip(&ch.fading[b]).map(|(x, y)| x.conj() * y).sum();
                        ch.path_loss[b] * ip.norm_sqr() / norms[a]
                    }
                })
                .collect()
        })
        .collect();
    GainMatrix::from_rows(&rows)
}

/// Gain matrix of a scenario, averaged over `network.slots` fading slots.
pub fn scenario_gains(s: &Scenario) -> Result<GainMatrix, ChannelError> {
    let n = &s.network;
    let slots = (0..n.slots)
        .map(|m| sample_channels_slot(s.seed, m, n.num_antennas, &n.path_loss).map(|c| composite_gains(&c)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(if slots.len() == 1 { slots.into_iter().next().unwrap() } else { GainMatrix::mean(&slots) })
}

/// Δ = G̃ − D̃ for a relaxed mask: G̃_kℓ = G_kℓ w̃_ℓ, D̃_kk = G_kk w̃_k.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDelta {
    pub k: usize,
    pub delta: Vec<f64>,
    pub mask: Vec<f64>,
}

impl MaskedDelta {
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.delta[k * self.k + l]
    }
}

pub fn masked_delta(g: &GainMatrix, w: &[f64]) -> MaskedDelta {
    assert_eq!(w.len(), g.k, "mask length must equal K");
    let k = g.k;
    let mut delta = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            let gt = g.get(a, b) * w[b];
            let dt = if a == b { g.get(a, a) * w[a] } else { 0.0 };
            delta[a * k + b] = gt - dt;
        }
    }
    MaskedDelta { k, delta, mask: w.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let rho = vec![1e-9; 6];
        let a = sample_channels(7, 2, &rho).unwrap();
        let b = sample_channels(7, 2, &rho).unwrap();
        let c = sample_channels(8, 2, &rho).unwrap();
        assert_eq!(a, b);
        assert_ne!(composite_gains(&a), composite_gains(&c));
    }

    #[test]
    fn user_streams_are_prefix_stable() {
        let a = sample_channels(3, 2, &[1e-9; 4]).unwrap();
        let b = sample_channels(3, 2, &[1e-9; 9]).unwrap();
        assert_eq!(a.fading[..], b.fading[..4]);
    }

    #[test]
    fn zero_path_loss_rejected() {
        assert_eq!(sample_channels(1, 2, &[1e-9, 0.0]), Err(ChannelError::ZeroPathLoss(1)));
    }

    #[test]
    fn orthogonal_and_collinear() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let ch = ChannelSet {
            seed: 0,
            num_antennas: 2,
            fading: vec![vec![one, zero], vec![zero, one]],
            path_loss: vec![0.5, 0.5],
        };
        let g = composite_gains(&ch);
        assert_eq!(g.get(0, 1), 0.0);
        assert_eq!(g.get(1, 0), 0.0);

        let h = vec![Complex64::new(0.3, -1.2), Complex64::new(0.7, 0.4)];
        let ch = ChannelSet { seed: 0, num_antennas: 2, fading: vec![h.clone(), h], path_loss: vec![0.25, 0.25] };
        let g = composite_gains(&ch);
        assert!((g.get(0, 1) - g.get(0, 0)).abs() <= 1e-15 * g.get(0, 0));
    }

    #[test]
    fn mask_extremes() {
        let ch = sample_channels(5, 2, &[1e-9; 4]).unwrap();
        let g = composite_gains(&ch);
        let d = masked_delta(&g, &[1.0; 4]);
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 0.0 } else { g.get(a, b) };
                assert_eq!(d.get(a, b), want);
            }
        }
        let z = masked_delta(&g, &[0.0; 4]);
        assert!(z.delta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn slot_average_is_mean() {
        let a = GainMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = GainMatrix::from_rows(&[vec![3.0, 2.0], vec![1.0, 0.0]]);
        assert_eq!(GainMatrix::mean(&[a, b]).g, vec![2.0, 2.0, 2.0, 2.0]);
    }
}
