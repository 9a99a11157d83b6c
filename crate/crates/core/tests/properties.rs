//! Invariants checked over randomized instances.

mod common;

use common::{gram_from_rollout, random_gain, random_truth, stabilizing_gain};
use hinted_lqr::control::{solve_dare, solve_lyapunov_cost};
use hinted_lqr::controllers::{epoch_schedule, LinearPolicy};
use hinted_lqr::estimation::apply_hint;
use hinted_lqr::hints::{validate_schedule, HintMode, HintProvider, HintSchedule, OracleHints};
use hinted_lqr::linalg::{min_eigenvalue, spectral_norm, spectral_radius};
use hinted_lqr::rng::CounterRng;
use hinted_lqr::simulation::{psd_bound_check, rollout, RolloutOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn dare_solution_is_a_stabilizing_fixed_point(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, rho in 0.3f64..1.4) {
        let t = random_truth(seed, n, m, rho, 1.0);
        let sol = solve_dare(&t.a, &t.b, &t.q, &t.r).unwrap();
        let p = &sol.p;
        let g = t.b.transpose() * p * &t.b + &t.r;
        let rhs = &t.q + t.a.transpose() * p * &t.a
            - t.a.transpose() * p * &t.b * g.clone().try_inverse().unwrap() * t.b.transpose() * p * &t.a;
        prop_assert!((&rhs - p).norm() <= 1e-7 * (1.0 + p.norm()));
        prop_assert!(min_eigenvalue(p) > 0.0);
        prop_assert!(spectral_radius(&(&t.a + &t.b * &sol.k)) < 1.0);
        // The gain's own Lyapunov cost matrix is the Riccati solution.
        let a_cl = &t.a + &t.b * &sol.k;
        let pk = solve_lyapunov_cost(&a_cl, &(&t.q + sol.k.transpose() * &t.r * &sol.k)).unwrap();
        prop_assert!((&pk - p).norm() <= 1e-7 * (1.0 + p.norm()));
    }

    #[test]
    fn dare_is_scale_covariant(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2, c in 0.1f64..10.0) {
        let t = random_truth(seed, n, m, 1.1, 1.0);
        let base = solve_dare(&t.a, &t.b, &t.q, &t.r).unwrap();
        let scaled = solve_dare(&t.a, &t.b, &(&t.q * c), &(&t.r * c)).unwrap();
        prop_assert!((&scaled.p - &base.p * c).norm() <= 1e-7 * c * (1.0 + base.p.norm()));
        prop_assert!((&scaled.k - &base.k).norm() <= 1e-7 * (1.0 + base.k.norm()));
    }

    #[test]
    fn optimal_gain_minimizes_cost(seed in any::<u64>(), eps in 1e-3f64..0.05) {
        let t = random_truth(seed, 3, 2, 0.9, 1.0);
        let k = stabilizing_gain(&t);
        let j_star = t.gain_cost(&k).unwrap();
        let perturbed = &k + random_gain(seed ^ 1, 2, 3, eps);
        if let Ok(j) = t.gain_cost(&perturbed) {
            prop_assert!(j >= j_star - 1e-9 * j_star);
        }
    }

    #[test]
    fn blockwise_inverse_matches_direct(seed in any::<u64>(), samples in 20usize..200, lambda in 0.1f64..5.0) {
        let t = random_truth(seed, 3, 2, 0.8, 1.0);
        let g = gram_from_rollout(&t, &DMatrix::zeros(2, 3), samples, lambda, seed);
        let inv = g.assembled_inverse().unwrap();
        let eye = DMatrix::<f64>::identity(5, 5);
        prop_assert!((&inv * g.gram() - eye).norm() <= 1e-8);
    }

    #[test]
    fn hinted_schur_identity_and_monotonicity(seed in any::<u64>(), g1 in 0.0f64..0.98, g2 in 0.0f64..0.98, b_mode in any::<bool>()) {
        let mode = if b_mode { HintMode::B } else { HintMode::A };
        let t = random_truth(seed, 3, 2, 0.9, 1.0);
        let g = gram_from_rollout(&t, &DMatrix::zeros(2, 3), 100, 1.0, seed);
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let h_lo = g.hinted_gram(mode, lo).unwrap();
        let h_hi = g.hinted_gram(mode, hi).unwrap();
        prop_assert!(h_lo.schur_identity_gap() <= 1e-10);
        prop_assert!(h_hi.schur_identity_gap() <= 1e-10);
        let w = g.gram();
        let scale = 1.0 + w.norm();
        prop_assert!(min_eigenvalue(&(&h_lo.augmented - &w)) >= -1e-12 * scale);
        prop_assert!(min_eigenvalue(&(&h_hi.augmented - &h_lo.augmented)) >= -1e-10 * (1.0 + h_hi.augmented.norm()));
    }

    #[test]
    fn hint_obeys_triangle_inequality(seed in any::<u64>(), gamma in 0.0f64..=1.0, e_scale in 0.0f64..2.0) {
        let rng = CounterRng::new(seed);
        let truth = rng.normal_matrix(hinted_lqr::rng::Stream::Aux(3), 0, 3, 2);
        let est = rng.normal_matrix(hinted_lqr::rng::Stream::Aux(3), 1, 3, 2);
        let e = rng.normal_matrix(hinted_lqr::rng::Stream::Aux(3), 2, 3, 2) * e_scale;
        let out = apply_hint(&est, &truth, gamma, &e);
        let post = (&out - &truth).norm();
        prop_assert!(post <= (1.0 - gamma) * (&est - &truth).norm() + e.norm() + 1e-12);
        prop_assert!(post >= e.norm() - (1.0 - gamma) * (&est - &truth).norm() - 1e-12);
    }

    #[test]
    fn oracle_hints_stay_on_schedule(seed in any::<u64>(), r in 1.1f64..3.0, theta in 0.0f64..=1.0, adversarial in any::<bool>()) {
        let taus = epoch_schedule(20, r * r, 50_000).unwrap();
        let schedule = HintSchedule::default_for(HintMode::B, r, &taus, theta).with_adversarial(adversarial);
        prop_assert!(schedule.validate().pass);
        let rng = CounterRng::new(seed);
        let truth = rng.normal_matrix(hinted_lqr::rng::Stream::Aux(4), 0, 3, 2);
        let mut oracle = OracleHints::new(truth.clone(), schedule, rng.clone());
        for i in 1..=taus.len() {
            let est = rng.normal_matrix(hinted_lqr::rng::Stream::Aux(4), i as u64, 3, 2);
            oracle.hint(i, &est).unwrap();
        }
        let audit = oracle.audit();
        let gammas: Vec<f64> = audit.iter().map(|h| h.gamma).collect();
        let norms: Vec<f64> = audit.iter().map(|h| h.e_norm()).collect();
        prop_assert!(validate_schedule(&gammas, &norms, &taus, HintMode::B, r).pass);
        for h in audit {
            prop_assert!(h.post_error <= (1.0 - h.gamma) * h.pre_error + h.e_norm() + 1e-12);
        }
    }

    #[test]
    fn psd_margins_are_nonnegative(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, norm in 0.01f64..5.0, slack in 1.0f64..3.0, p in 0.01f64..5.0) {
        let k = random_gain(seed, m, n, norm);
        let mu = min_eigenvalue(&(&k * k.transpose())).max(0.0);
        let margins = psd_bound_check(&k, norm * slack, p, mu);
        prop_assert!(margins.gain_form >= -1e-10);
        prop_assert!(margins.curvature_form >= -1e-10);
    }

    #[test]
    fn epoch_schedule_is_geometric(tau1 in 1u64..500, growth in 1.5f64..8.0, extra in 0u64..100_000) {
        let horizon = tau1 + extra;
        let taus = epoch_schedule(tau1, growth, horizon).unwrap();
        prop_assert_eq!(taus[0], tau1);
        prop_assert!(taus.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(*taus.last().unwrap() <= horizon);
        let next = (tau1 as f64 * growth.powi(taus.len() as i32)).round() as u64;
        prop_assert!(next > horizon);
    }

    #[test]
    fn regret_ledger_telescopes(seed in any::<u64>(), horizon in 1u64..400) {
        let t = random_truth(seed, 2, 1, 0.7, 1.0);
        let k = stabilizing_gain(&t);
        let mut policy = LinearPolicy::new(k);
        let mut opts = RolloutOptions::new(seed, horizon);
        opts.keep_trajectory = true;
        let run = rollout(&t, &mut policy, &opts);
        let tr = run.trajectory.as_ref().unwrap();
        let j = run.ledger.j_star;
        let mut acc = 0.0;
        for (i, c) in tr.costs.iter().enumerate() {
            acc += c - j;
            let step = (i + 1) as u64;
            prop_assert!((run.ledger.regret_at(step) - acc).abs() <= 1e-9 * (1.0 + acc.abs()));
        }
        prop_assert!(tr.dynamics_residual(&t) <= 1e-12);
    }

    #[test]
    fn rollout_is_reproducible(seed in any::<u64>()) {
        let t = random_truth(seed, 2, 2, 0.9, 0.5);
        let k = stabilizing_gain(&t);
        let opts = RolloutOptions::new(seed, 200);
        let a = rollout(&t, &mut LinearPolicy::new(k.clone()), &opts);
        let b = rollout(&t, &mut LinearPolicy::new(k), &opts);
        prop_assert_eq!(a.regret().to_bits(), b.regret().to_bits());
    }

    #[test]
    fn spectral_norm_bounds_radius(seed in any::<u64>(), n in 1usize..=5) {
        let a = CounterRng::new(seed).normal_matrix(hinted_lqr::rng::Stream::Aux(5), 0, n, n);
        prop_assert!(spectral_radius(&a) <= spectral_norm(&a) * (1.0 + 1e-10));
    }
}
