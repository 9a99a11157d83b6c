//! Privileged hint oracle.
//!
//! The oracle owns the true parameter slice (`B*` or `A*`) and a decay
//! schedule. A controller sees it only through [`HintProvider::hint`], which
//! returns the combined matrix `gamma_i (truth - estimate) + E_i`; neither
//! `gamma_i`, `E_i` nor the truth cross that boundary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{CounterRng, Stream};

/// Relative slack allowed when checking the error budget.
const BUDGET_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HintMode {
    /// Hint on the input matrix; decay `1 - gamma_i = r^{-2i}`.
    B,
    /// Hint on the state matrix; decay `1 - gamma_i = 4^{-i}`.
    A,
}

impl HintMode {
    /// Per-epoch contraction factor of `1 - gamma_i`.
    pub fn decay(self, r: f64) -> f64 {
        match self {
            HintMode::B => r * r,
            HintMode::A => 4.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HintError {
    #[error("epoch {epoch} is outside the hint schedule (1..={len})")]
    ScheduleViolation { epoch: usize, len: usize },
    #[error("hint target has shape {expected:?}, estimate has {got:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
}

/// Per-epoch hint weights and error norms. Epochs are 1-based in the API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintSchedule {
    pub mode: HintMode,
    pub r: f64,
    /// Epoch start times `tau_i`.
    pub taus: Vec<u64>,
    pub gammas: Vec<f64>,
    /// Frobenius norm of the error actually injected at each epoch.
    pub e_norms: Vec<f64>,
    /// Fraction of the error budget in use.
    pub theta: f64,
    /// Point `E_i` away from the truth instead of in a random direction.
    pub adversarial: bool,
}

impl HintSchedule {
    /// `1 - gamma_i = r^{-2i}` (B mode) or `4^{-i}` (A mode), with
    /// `||E_i||_F = theta sqrt((1 - gamma_i) / tau_i)`.
    pub fn default_for(mode: HintMode, r: f64, taus: &[u64], theta: f64) -> Self {
        assert!(r > 1.0, "epoch ratio must exceed 1");
        let decay = mode.decay(r);
        let gammas: Vec<f64> = (1..=taus.len()).map(|i| 1.0 - decay.powi(-(i as i32))).collect();
        let e_norms = gammas
            .iter()
            .zip(taus)
            .map(|(g, &tau)| theta * ((1.0 - g) / tau as f64).sqrt())
            .collect();
        Self {
            mode,
            r,
            taus: taus.to_vec(),
            gammas,
            e_norms,
            theta,
            adversarial: false,
        }
    }

    /// `gamma_i = 1`, `E_i = 0`: the hint reveals the truth.
    pub fn exact(mode: HintMode, r: f64, taus: &[u64]) -> Self {
        Self {
            mode,
            r,
            taus: taus.to_vec(),
            gammas: vec![1.0; taus.len()],
            e_norms: vec![0.0; taus.len()],
            theta: 0.0,
            adversarial: false,
        }
    }

    /// Scalar external-estimate variant: `1 - gamma_i = r^{-2i}` and
    /// `|E_i| = theta r^{-2i} / sqrt(4 k tau_i)`, which is inside both the
    /// generic budget and the tighter scalar-variant budget.
    pub fn scalar_variant(r: f64, taus: &[u64], k: f64, theta: f64) -> Self {
        let mut s = Self::default_for(HintMode::B, r, taus, theta);
        s.e_norms = (1..=taus.len())
            .map(|i| theta * r.powi(-2 * i as i32) / (4.0 * k * taus[i - 1] as f64).sqrt())
            .collect();
        s
    }

    pub fn with_adversarial(mut self, adversarial: bool) -> Self {
        self.adversarial = adversarial;
        self
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// `sqrt((1 - gamma_i) / tau_i)`.
    pub fn e_budget(&self, epoch: usize) -> f64 {
        ((1.0 - self.gammas[epoch - 1]) / self.taus[epoch - 1] as f64).sqrt()
    }

    fn check_epoch(&self, epoch: usize) -> Result<(), HintError> {
        if epoch == 0 || epoch > self.len() {
            return Err(HintError::ScheduleViolation { epoch, len: self.len() });
        }
        Ok(())
    }

    /// Error matrix for `epoch`, deterministic in `(rng seed, epoch)`.
    pub fn error_matrix(
        &self,
        epoch: usize,
        estimate: &DMatrix<f64>,
        truth: &DMatrix<f64>,
        rng: &CounterRng,
    ) -> Result<DMatrix<f64>, HintError> {
        self.check_epoch(epoch)?;
        let norm = self.e_norms[epoch - 1];
        let (rows, cols) = truth.shape();
        if norm == 0.0 {
            return Ok(DMatrix::zeros(rows, cols));
        }
        let away = estimate - truth;
        let direction = if self.adversarial && away.norm() > 0.0 {
            away
        } else {
            rng.normal_matrix(Stream::HintDirection, epoch as u64, rows, cols)
        };
        Ok(&direction * (norm / direction.norm()))
    }

    /// `gamma_i (truth - estimate) + E_i`.
    pub fn emit_hint(
        &self,
        epoch: usize,
        estimate: &DMatrix<f64>,
        truth: &DMatrix<f64>,
        rng: &CounterRng,
    ) -> Result<DMatrix<f64>, HintError> {
        if estimate.shape() != truth.shape() {
            return Err(HintError::Shape { expected: truth.shape(), got: estimate.shape() });
        }
        let e = self.error_matrix(epoch, estimate, truth, rng)?;
        Ok((truth - estimate) * self.gammas[epoch - 1] + e)
    }

    pub fn validate(&self) -> ScheduleReport {
        validate_schedule(&self.gammas, &self.e_norms, &self.taus, self.mode, self.r)
    }
}

/// Constraint-by-constraint verdict on a schedule. Index `i - 1` holds epoch `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleReport {
    /// `1 - gamma_1 <= 1/decay`.
    pub first_ok: bool,
    /// `(1 - gamma_i) <= (1 - gamma_{i-1}) / decay`; entry 0 is always true.
    pub decay_ok: Vec<bool>,
    /// `||E_i||_F^2 <= (1 - gamma_i) / tau_i`.
    pub budget_ok: Vec<bool>,
    /// `gamma_i` in `[0, 1]`.
    pub range_ok: Vec<bool>,
    pub pass: bool,
}

impl ScheduleReport {
    /// First failing epoch, 1-based.
    pub fn first_failure(&self) -> Option<usize> {
        if !self.first_ok {
            return Some(1);
        }
        (0..self.decay_ok.len())
            .find(|&i| !(self.decay_ok[i] && self.budget_ok[i] && self.range_ok[i]))
            .map(|i| i + 1)
    }
}

pub fn validate_schedule(gammas: &[f64], e_norms: &[f64], taus: &[u64], mode: HintMode, r: f64) -> ScheduleReport {
    let decay = mode.decay(r);
    let slack = |bound: f64| bound * (1.0 + BUDGET_RTOL) + f64::EPSILON * BUDGET_RTOL;
    let first_ok = gammas.first().is_none_or(|g| 1.0 - g <= slack(1.0 / decay));
    let decay_ok: Vec<bool> = (0..gammas.len())
        .map(|i| i == 0 || 1.0 - gammas[i] <= slack((1.0 - gammas[i - 1]) / decay))
        .collect();
    let budget_ok: Vec<bool> = (0..gammas.len())
        .map(|i| e_norms[i] * e_norms[i] <= slack((1.0 - gammas[i]) / taus[i] as f64))
        .collect();
    let range_ok: Vec<bool> = gammas.iter().map(|g| (0.0..=1.0).contains(g)).collect();
    let pass = first_ok && decay_ok.iter().chain(&budget_ok).chain(&range_ok).all(|&b| b);
    ScheduleReport { first_ok, decay_ok, budget_ok, range_ok, pass }
}

/// What the oracle emitted at one epoch. Kept on the oracle side for audits.
#[derive(Clone, Debug, PartialEq)]
pub struct HintRecord {
    pub mode: HintMode,
    pub epoch: usize,
    pub tau: u64,
    pub gamma: f64,
    pub error: DMatrix<f64>,
    /// `||estimate - truth||_F` before the hint.
    pub pre_error: f64,
    /// `||estimate + hint - truth||_F`.
    pub post_error: f64,
}

impl HintRecord {
    pub fn e_norm(&self) -> f64 {
        self.error.norm()
    }
}

/// The only channel between a controller and privileged information.
pub trait HintProvider: Send {
    fn mode(&self) -> HintMode;

    /// Combined hint for `epoch` (1-based) given the controller's current estimate.
    fn hint(&mut self, epoch: usize, estimate: &DMatrix<f64>) -> Result<DMatrix<f64>, HintError>;

    /// Oracle-side log; not meant for controllers.
    fn audit(&self) -> &[HintRecord];
}

/// Schedule-driven oracle holding the true `B*` (B mode) or `A*` (A mode).
pub struct OracleHints {
    truth: DMatrix<f64>,
    schedule: HintSchedule,
    rng: CounterRng,
    records: Vec<HintRecord>,
}

impl OracleHints {
    pub fn new(truth_slice: DMatrix<f64>, schedule: HintSchedule, rng: CounterRng) -> Self {
        Self { truth: truth_slice, schedule, rng, records: Vec::new() }
    }

    pub fn schedule(&self) -> &HintSchedule {
        &self.schedule
    }
}

impl HintProvider for OracleHints {
    fn mode(&self) -> HintMode {
        self.schedule.mode
    }

    fn hint(&mut self, epoch: usize, estimate: &DMatrix<f64>) -> Result<DMatrix<f64>, HintError> {
        if estimate.shape() != self.truth.shape() {
            return Err(HintError::Shape { expected: self.truth.shape(), got: estimate.shape() });
        }
        let error = self.schedule.error_matrix(epoch, estimate, &self.truth, &self.rng)?;
        let gamma = self.schedule.gammas[epoch - 1];
        let hint = (&self.truth - estimate) * gamma + &error;
        self.records.push(HintRecord {
            mode: self.schedule.mode,
            epoch,
            tau: self.schedule.taus[epoch - 1],
            gamma,
            pre_error: (estimate - &self.truth).norm(),
            post_error: (estimate + &hint - &self.truth).norm(),
            error,
        });
        Ok(hint)
    }

    fn audit(&self) -> &[HintRecord] {
        &self.records
    }
}

/// Source of externally supplied `B` estimates (scalar variant).
pub trait EstimateFeed: Send {
    fn estimate(&mut self, epoch: usize) -> DMatrix<f64>;
}

/// Returns `B* + eps * s_i` with `s_i` a uniform draw from `[-1, 1]`, so
/// every estimate lies within `eps` of the truth.
pub struct PerturbedEstimates {
    truth: DMatrix<f64>,
    eps: f64,
    rng: CounterRng,
}

impl PerturbedEstimates {
    pub fn new(truth_b: DMatrix<f64>, eps: f64, rng: CounterRng) -> Self {
        Self { truth: truth_b, eps, rng }
    }
}

impl EstimateFeed for PerturbedEstimates {
    fn estimate(&mut self, epoch: usize) -> DMatrix<f64> {
        let (rows, cols) = self.truth.shape();
        let base = (epoch * rows * cols) as u128;
        DMatrix::from_fn(rows, cols, |i, j| {
            let u = self.rng.uniform(Stream::ExternalEstimate, base + (j * rows + i) as u128);
            self.truth[(i, j)] + self.eps * (2.0 * u - 1.0)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taus() -> Vec<u64> {
        vec![100, 400, 1600, 6400]
    }

    #[test]
    fn default_gammas() {
        let s = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 1.0);
        assert_eq!(s.gammas[0], 0.75);
        assert_eq!(s.gammas[2], 0.984375);
        let a = HintSchedule::default_for(HintMode::A, 3.0, &taus(), 1.0);
        assert_eq!(a.gammas[1], 1.0 - 1.0 / 16.0);
    }

    #[test]
    fn zero_theta_means_no_error() {
        let s = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 0.0);
        assert!(s.e_norms.iter().all(|&e| e == 0.0));
        let est = DMatrix::from_element(2, 1, 0.3);
        let truth = DMatrix::from_element(2, 1, 1.0);
        let h = s.emit_hint(1, &est, &truth, &CounterRng::new(0)).unwrap();
        assert_eq!(h, (&truth - &est) * 0.75);
    }

    #[test]
    fn exact_hint_reveals_truth() {
        let s = HintSchedule::exact(HintMode::B, 2.0, &taus());
        let truth = DMatrix::from_row_slice(2, 1, &[0.4, -1.2]);
        let est = DMatrix::zeros(2, 1);
        assert_eq!(s.emit_hint(2, &est, &truth, &CounterRng::new(3)).unwrap(), truth);
    }

    #[test]
    fn hint_at_truth_is_pure_error() {
        let s = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 1.0);
        let truth = DMatrix::from_row_slice(2, 1, &[0.4, -1.2]);
        let rng = CounterRng::new(3);
        let h = s.emit_hint(1, &truth, &truth, &rng).unwrap();
        assert_eq!(h, s.error_matrix(1, &truth, &truth, &rng).unwrap());
        assert!((h.norm() - s.e_budget(1)).abs() < 1e-15);
    }

    #[test]
    fn epoch_out_of_range() {
        let s = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 1.0);
        let z = DMatrix::zeros(1, 1);
        let err = s.emit_hint(5, &z, &z, &CounterRng::new(0)).unwrap_err();
        assert_eq!(err, HintError::ScheduleViolation { epoch: 5, len: 4 });
        assert!(s.emit_hint(0, &z, &z, &CounterRng::new(0)).is_err());
    }

    #[test]
    fn validation_catches_violations() {
        let good = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 1.0);
        assert!(good.validate().pass);

        let mut stalled = good.clone();
        stalled.gammas[1] = stalled.gammas[0];
        stalled.e_norms[1] = 0.0;
        let rep = stalled.validate();
        assert!(!rep.pass);
        assert!(!rep.decay_ok[1]);
        assert_eq!(rep.first_failure(), Some(2));

        let mut loud = good.clone();
        loud.e_norms[2] *= 2f64.sqrt();
        let rep = loud.validate();
        assert!(!rep.budget_ok[2]);
        assert!(rep.decay_ok.iter().all(|&b| b));
    }

    #[test]
    fn adversarial_points_away() {
        let s = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 1.0).with_adversarial(true);
        let truth = DMatrix::from_element(1, 1, 1.0);
        let est = DMatrix::from_element(1, 1, 0.0);
        let e = s.error_matrix(1, &est, &truth, &CounterRng::new(0)).unwrap();
        assert!(e[(0, 0)] < 0.0);
    }

    #[test]
    fn oracle_records_audit() {
        let truth = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let s = HintSchedule::default_for(HintMode::B, 2.0, &taus(), 1.0);
        let mut o = OracleHints::new(truth.clone(), s, CounterRng::new(9));
        let est = DMatrix::zeros(2, 1);
        let h = o.hint(1, &est).unwrap();
        let rec = &o.audit()[0];
        assert_eq!(rec.gamma, 0.75);
        assert!((rec.post_error - (&est + &h - &truth).norm()).abs() < 1e-15);
        assert!(rec.post_error <= (1.0 - rec.gamma) * rec.pre_error + rec.e_norm() + 1e-15);
    }

    #[test]
    fn perturbed_estimates_stay_within_eps() {
        let truth = DMatrix::from_element(1, 1, 1.0);
        let mut f = PerturbedEstimates::new(truth.clone(), 0.05, CounterRng::new(4));
        for i in 1..50 {
            assert!((f.estimate(i) - &truth).norm() <= 0.05);
        }
    }
}
