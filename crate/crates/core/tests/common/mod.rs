//! Seeded random instances shared by the integration tests.
#![allow(dead_code)]

use hinted_lqr::control::SystemTruth;
use hinted_lqr::estimation::GramAccumulator;
use hinted_lqr::linalg::{spectral_norm, spectral_radius};
use hinted_lqr::rng::{CounterRng, Stream};
use nalgebra::{DMatrix, DVector};

/// Random `(A, B)` with `rho(A)` rescaled to `rho` and `Q = I`, `R = I`.
pub fn random_truth(seed: u64, n: usize, m: usize, rho: f64, sigma2: f64) -> SystemTruth {
    let rng = CounterRng::new(seed);
    let mut a = rng.normal_matrix(Stream::Aux(1), 0, n, n);
    let r0 = spectral_radius(&a);
    if r0 > 1e-9 {
        a *= rho / r0;
    }
    let b = rng.normal_matrix(Stream::Aux(1), 1, n, m);
    SystemTruth::new(a, b, DMatrix::identity(n, n), DMatrix::identity(m, m), sigma2).unwrap()
}

/// Random gain of spectral norm `norm`.
pub fn random_gain(seed: u64, m: usize, n: usize, norm: f64) -> DMatrix<f64> {
    let k = CounterRng::new(seed).normal_matrix(Stream::Aux(2), 0, m, n);
    let s = spectral_norm(&k);
    k * (norm / s)
}

/// Rolls `x' = A x + B u + w` with `u = K x + eta` and records every
/// transition together with its noise.
pub fn gram_from_rollout(truth: &SystemTruth, gain: &DMatrix<f64>, samples: usize, lambda: f64, seed: u64) -> GramAccumulator {
    let rng = CounterRng::new(seed);
    let (n, m) = (truth.n(), truth.m());
    let mut g = GramAccumulator::new(n, m, lambda);
    let mut x = DVector::zeros(n);
    for t in 0..samples as u64 {
        let u = gain * &x + rng.normal_vector(Stream::Excitation, t, m);
        let w = rng.normal_vector(Stream::Plant, t, n) * truth.sigma();
        let next = &truth.a * &x + &truth.b * &u + &w;
        g.accumulate_with_noise(&x, &u, &next, &w);
        x = next;
    }
    g
}

/// Stabilizing gain for `truth` (its optimal gain).
pub fn stabilizing_gain(truth: &SystemTruth) -> DMatrix<f64> {
    truth.optimal().unwrap().k
}
