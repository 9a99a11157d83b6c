//! Empirical sensitivity constants of the certainty-equivalent gain.
//!
//! For each radius `eps`, random perturbations `(dA, dB)` of spectral norm
//! exactly `eps` are drawn and the Riccati gain of the perturbed pair is
//! evaluated on the true plant. `epsilon0` is the largest radius of the grid
//! at which every draw (at that radius and all smaller ones) still
//! stabilizes the plant; `C0` is the largest of `(J(K) - J*)/eps^2` and
//! `||K - K*||/eps` observed up to `epsilon0`.

use serde::Serialize;

use super::HarnessError;
use crate::control::{solve_dare, SystemTruth};
use crate::linalg::spectral_norm;
use crate::rng::{CounterRng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusRow {
    pub radius: f64,
    pub stable_fraction: f64,
    pub max_cost_ratio: f64,
    pub max_gain_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub c0: f64,
    pub epsilon0: f64,
    pub samples: usize,
    pub rows: Vec<RadiusRow>,
}

/// Geometric grid `start, start*ratio, ...` up to `stop`.
pub fn radius_grid(start: f64, stop: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = start;
    while r <= stop * (1.0 + 1e-12) {
        out.push(r);
        r *= ratio;
    }
    out
}

pub fn calibrate(truth: &SystemTruth, radii: &[f64], samples: usize, seed: u64) -> Result<Calibration, HarnessError> {
    let opt = truth.optimal().map_err(|e| HarnessError::Config(format!("calibrate: {e}")))?;
    let j_star = opt.cost(truth.sigma2);
    let (n, m) = (truth.n(), truth.m());
    let rng = CounterRng::new(seed);
    let mut rows = Vec::with_capacity(radii.len());
    for (ri, &eps) in radii.iter().enumerate() {
        let (mut stable, mut cost_ratio, mut gain_ratio) = (0usize, 0.0f64, 0.0f64);
        for s in 0..samples {
            let dir = rng.normal_matrix(Stream::Aux(7), (ri * samples + s) as u64, n, n + m);
            let delta = &dir * (eps / spectral_norm(&dir));
            let a = &truth.a + delta.columns(0, n);
            let b = &truth.b + delta.columns(n, m);
            let Ok(sol) = solve_dare(&a, &b, &truth.q, &truth.r) else { continue };
            let Ok(j) = truth.gain_cost(&sol.k) else { continue };
            stable += 1;
            cost_ratio = cost_ratio.max((j - j_star) / (eps * eps));
            gain_ratio = gain_ratio.max(spectral_norm(&(&sol.k - &opt.k)) / eps);
        }
        rows.push(RadiusRow {
            radius: eps,
            stable_fraction: stable as f64 / samples as f64,
            max_cost_ratio: cost_ratio,
            max_gain_ratio: gain_ratio,
        });
    }
    let safe = rows.iter().take_while(|r| r.stable_fraction == 1.0).count();
    if safe == 0 {
        return Err(HarnessError::Config("calibrate: no radius of the grid keeps every draw stable".into()));
    }
    let c0 = rows[..safe]
        .iter()
        .map(|r| r.max_cost_ratio.max(r.max_gain_ratio))
        .fold(0.0, f64::max);
    Ok(Calibration { c0, epsilon0: rows[safe - 1].radius, samples, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn grid_is_geometric() {
        let g = radius_grid(0.1, 0.8, 2.0);
        assert_eq!(g, vec![0.1, 0.2, 0.4, 0.8]);
    }

    #[test]
    fn scalar_calibration_is_consistent() {
        let one = DMatrix::identity(1, 1);
        let t = SystemTruth::new(DMatrix::from_element(1, 1, 1.1), one.clone(), one.clone(), one, 1.0).unwrap();
        let cal = calibrate(&t, &radius_grid(0.05, 0.4, 2.0), 20, 3).unwrap();
        assert!(cal.c0 > 0.0 && cal.c0.is_finite());
        assert!(cal.epsilon0 >= 0.05);
    }
}
