use proptest::prelude::*;

use taskalloc::config::{db_to_ratio, dbm_to_mw, mw_to_dbm, ratio_to_db, task_weights};
use taskalloc::learning::{grad_phi_delta, grad_phi_p, learning_error, phi, ErrorModel};
use taskalloc::oracle_baselines::project_simplex;
use taskalloc::scheduling::{enforce_cap, pin_leader, relaxed_weight, round_mask};
use taskalloc::solver_accel::{lambda_p_bound, theta_next};
use taskalloc::solver_parallel::{step_delta, step_p};
use taskalloc::{load_scenario, sample_channels, TaskSpec};

fn task(a_sz: f64, v: f64) -> TaskSpec {
    let src = format!(
        "spec = 1\n[network]\nnum_antennas = 1\nbandwidth = 1e5\ntransmit_time = 1\nnoise_power_dbm = -77\ntotal_power_dbm = 13\n\
         [[tasks]]\nname = \"t\"\na_i = 1\nb_i = 0.5\nA_i = {a_sz}\nV_i = {v}\nuser_ids = [0]\n"
    );
    load_scenario(&src).unwrap().tasks.remove(0)
}

proptest! {
    #[test]
    fn dbm_round_trip(x in -150.0f64..60.0) {
        prop_assert!((mw_to_dbm(dbm_to_mw(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        prop_assert!((ratio_to_db(db_to_ratio(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn task_weights_sum_to_one(sizes in prop::collection::vec((1.0f64..5e3, 1.0f64..2e5), 1..6)) {
        let tasks: Vec<TaskSpec> = sizes.iter().map(|&(a, v)| task(a, v)).collect();
        let w = task_weights(&tasks).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn learning_error_decreasing(a in 0.1f64..10.0, b in 0.05f64..1.5, d in 1.0f64..1e6, step in 1e-3f64..1e3) {
        let lo = learning_error(a, b, d).unwrap();
        let hi = learning_error(a, b, d + step).unwrap();
        prop_assert!(hi < lo);
    }

    #[test]
    fn theta_recurrence(theta in 1e-6f64..=1.0) {
        let t = theta_next(theta);
        prop_assert!(t > 0.0 && t < theta);
        prop_assert!((t * t - theta * theta * (1.0 - t)).abs() <= 1e-12 * theta * theta);
    }

    #[test]
    fn lambda_p_dominates_operator_norm(norm in 0.0f64..50.0, k in 2usize..256, i in 1usize..8, ki in 1usize..64) {
        // ‖[Δ(:,K_i); 1ᵀ]‖² ≤ ‖Δ(:,K_i)‖² + |K_i|.
        let a1 = norm * norm + ki as f64;
        prop_assert!(lambda_p_bound(norm, k, i, ki) >= 2.0 * a1);
    }

    #[test]
    fn simplex_projection(v in prop::collection::vec(-5.0f64..5.0, 1..12), total in 0.1f64..10.0) {
        let x = project_simplex(&v, total);
        prop_assert!(x.iter().all(|&e| e >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - total).abs() <= 1e-9 * total);
        let again = project_simplex(&x, total);
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn box_steps_stay_feasible(
        p in prop::collection::vec(0.0f64..1.0, 4),
        g in prop::collection::vec(-10.0f64..10.0, 4),
        w in prop::collection::vec(1e-6f64..=1.0, 4),
        eta in 1e-5f64..1e-1,
        nu in 0.0f64..1.0,
        sigma2 in 1e-6f64..1.0,
    ) {
        prop_assert!(step_p(&p, &g, &w, eta, nu).iter().all(|&x| x >= 0.0));
        prop_assert!(step_delta(&p, &g, eta, sigma2).iter().all(|&x| x >= sigma2));
    }

    #[test]
    fn relaxed_weight_monotone_in_nu(
        w in 1e-6f64..=1.0,
        signal in 0.0f64..1e3,
        delta in 1e-3f64..1e2,
        nu in 0.0f64..5.0,
        dnu in 0.0f64..5.0,
    ) {
        let eps = 1e-6;
        let lo = relaxed_weight(w, signal, delta, nu, eps);
        let hi = relaxed_weight(w, signal, delta, nu + dnu, eps);
        prop_assert!((eps..=1.0).contains(&lo));
        prop_assert!(hi <= lo);
    }

    #[test]
    fn cap_is_enforced(seg in prop::collection::vec(0.0f64..=1.0, 1..10), cap in 1usize..6, nu in 0.01f64..1.0) {
        let fixed = seg.clone();
        let mut out = enforce_cap(seg, cap, nu, 1e-6, |_| fixed.clone());
        prop_assert!(round_mask(&out.segment).iter().sum::<f64>() <= cap as f64);
        pin_leader(&mut out.segment);
        let active = round_mask(&out.segment).iter().sum::<f64>();
        prop_assert!(active >= 1.0 && active <= cap.max(1) as f64);
    }

    #[test]
    fn gradients_match_central_differences(
        p in prop::collection::vec(0.05f64..1.0, 3),
        extra in prop::collection::vec(0.0f64..2.0, 3),
        gd in prop::collection::vec(0.1f64..20.0, 3),
        b in 0.2f64..1.0,
    ) {
        let m = ErrorModel { a: 5.0, b, initial_samples: 200.0, bits_per_sample: 324.0 };
        let users = [0usize, 1, 2];
        let w = [1.0; 3];
        let sigma2 = 0.5;
        let delta: Vec<f64> = extra.iter().map(|e| sigma2 + e).collect();
        let bt = 2000.0;
        let gp = grad_phi_p(&m, bt, &users, &gd, &w, &p, &delta);
        let gdl = grad_phi_delta(&m, bt, &users, &gd, &w, &p, &delta);
        for k in 0..3 {
            let h = 1e-6 * p[k];
            let (mut a, mut c) = (p.clone(), p.clone());
            a[k] += h;
            c[k] -= h;
            let fd = (phi(&m, bt, &users, &gd, &w, &a, &delta) - phi(&m, bt, &users, &gd, &w, &c, &delta)) / (2.0 * h);
            prop_assert!((fd - gp[k]).abs() <= 1e-5 * gp[k].abs().max(1e-12), "p[{}]: {} vs {}", k, fd, gp[k]);
            let h = 1e-6 * delta[k];
            let (mut a, mut c) = (delta.clone(), delta.clone());
            a[k] += h;
            c[k] -= h;
            let fd = (phi(&m, bt, &users, &gd, &w, &p, &a) - phi(&m, bt, &users, &gd, &w, &p, &c)) / (2.0 * h);
            prop_assert!((fd - gdl[k]).abs() <= 1e-5 * gdl[k].abs().max(1e-12), "delta[{}]: {} vs {}", k, fd, gdl[k]);
        }
    }
}

#[test]
fn fading_moments() {
    // Unit-variance fading: E|h|² = 1 per antenna, real and imaginary parts
    // each carry half.
    let k = 240;
    let ch = sample_channels(99, 4, &vec![1.0; k]).unwrap();
    let mut power = 0.0;
    let mut re2 = 0.0;
    let mut n = 0.0;
    for u in 0..k {
        for h in ch.vector(u) {
            power += h.norm_sqr();
            re2 += h.re * h.re;
            n += 1.0;
        }
    }
    assert!((power / n - 1.0).abs() < 0.05, "E|h|^2 = {}", power / n);
    assert!((re2 / n - 0.5).abs() < 0.05 * 0.5, "E re^2 = {}", re2 / n);
}
