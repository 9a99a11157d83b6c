//! The epoch engine behind every learning controller.
//!
//! Time runs `t = 1..=T`. Steps `t < tau_1` are warm-up. At `t = tau_i` the
//! controller re-identifies the plant from all transitions observed so far
//! (samples `s = 1..tau_i - 1`), computes a certainty-equivalent gain, and
//! holds it until `tau_{i+1} - 1`. The strategies differ only in how the
//! estimate is formed at an epoch boundary.

use nalgebra::{DMatrix, DVector};

use super::{Control, ControllerConfig, ControllerError, ControllerStatus, Phase, Policy};
use crate::control::solve_dare;
use crate::estimation::{EstimatePair, GramAccumulator};
use crate::hints::{EstimateFeed, HintMode, HintProvider, HintRecord};
use crate::linalg::{min_eigenvalue, spectral_norm};
use crate::rng::{CounterRng, Stream};

/// How the estimate is formed at each epoch boundary.
pub enum Strategy {
    /// Joint ridge estimate, hint on `B`, ridge re-fit of `A`. With an
    /// external feed the pre-hint `B` comes from the feed instead of the
    /// joint estimate.
    HintB {
        hints: Box<dyn HintProvider>,
        external: Option<Box<dyn EstimateFeed>>,
    },
    /// Joint ridge estimate, hint on `A`, ridge re-fit of `B`, preceded by a
    /// curvature search over `mu_i`.
    HintA { hints: Box<dyn HintProvider>, mus: Vec<f64> },
    /// `B` given exactly; ridge fit of `A` only.
    KnownB { b: DMatrix<f64> },
    /// Joint ridge estimate and decaying exploration noise of standard
    /// deviation `sigma tau_i^{-1/4}` during epoch `i`.
    NoHint,
}

/// Snapshot taken at an epoch boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tau: u64,
    /// Estimate before the hint.
    pub raw: EstimatePair,
    /// Estimate after the hint (equal to `raw` without hints).
    pub estimate: EstimatePair,
    /// Gain from the Riccati solve, if it succeeded.
    pub gain: Option<DMatrix<f64>>,
    pub gain_norm: Option<f64>,
    /// The controller aborted at this boundary or during this epoch.
    pub aborted: bool,
    /// Curvature threshold `mu_i` and whether `K K^T >= 1.5 mu_i I` held.
    pub mu: Option<f64>,
    pub triggered: Option<bool>,
    /// Data available at the boundary (samples `1..tau_i - 1`).
    pub gram: GramAccumulator,
}

pub struct AdaptiveController {
    cfg: ControllerConfig,
    taus: Vec<u64>,
    strategy: Strategy,
    gram: GramAccumulator,
    phase: Phase,
    gain: DMatrix<f64>,
    gain_norm: f64,
    explore_std: f64,
    next_epoch: usize,
    log: Vec<EpochRecord>,
    status: ControllerStatus,
    searching: bool,
}

impl AdaptiveController {
    pub fn new(cfg: ControllerConfig, strategy: Strategy) -> Result<Self, ControllerError> {
        let (n, m) = (cfg.n(), cfg.m());
        if cfg.k0.shape() != (m, n) {
            return Err(ControllerError::InvalidParam(format!("K0 has shape {:?}, expected ({m}, {n})", cfg.k0.shape())));
        }
        cfg.params.validate(n, m)?;
        let growth = match &strategy {
            Strategy::HintA { .. } => 4.0,
            _ => cfg.params.r * cfg.params.r,
        };
        let taus = super::epoch_schedule(cfg.params.tau1, growth, cfg.params.horizon)?;
        match &strategy {
            Strategy::HintB { hints, .. } if hints.mode() != HintMode::B => {
                return Err(ControllerError::InvalidParam("B-hint controller given an A-mode hint provider".into()))
            }
            Strategy::HintA { hints, mus } => {
                if hints.mode() != HintMode::A {
                    return Err(ControllerError::InvalidParam("A-hint controller given a B-mode hint provider".into()));
                }
                if mus.len() < taus.len() {
                    return Err(ControllerError::InvalidParam(format!(
                        "{} curvature thresholds for {} epochs",
                        mus.len(),
                        taus.len()
                    )));
                }
            }
            Strategy::KnownB { b } if b.shape() != (n, m) => {
                return Err(ControllerError::InvalidParam(format!("B has shape {:?}", b.shape())))
            }
            _ => {}
        }
        let searching = matches!(strategy, Strategy::HintA { .. });
        let gram = GramAccumulator::new(n, m, cfg.params.lambda);
        let gain = cfg.k0.clone();
        let gain_norm = spectral_norm(&gain);
        Ok(Self {
            cfg,
            taus,
            strategy,
            gram,
            phase: Phase::Warmup,
            gain,
            gain_norm,
            explore_std: 0.0,
            next_epoch: 0,
            log: Vec::new(),
            status: ControllerStatus::default(),
            searching,
        })
    }

    /// Epoch start times.
    pub fn taus(&self) -> &[u64] {
        &self.taus
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    fn excitation_std(&self) -> f64 {
        self.cfg.params.excitation_var.sqrt()
    }

    fn identify(&mut self, epoch: usize) -> Option<(EstimatePair, EstimatePair)> {
        let joint = self.gram.rls_joint().ok()?;
        match &mut self.strategy {
            Strategy::HintB { hints, external } => {
                let b_hat = match external {
                    Some(feed) => feed.estimate(epoch),
                    None => joint.b.clone(),
                };
                let hint = hints.hint(epoch, &b_hat).ok()?;
                let b = &b_hat + hint;
                let a = self.gram.rls_a_given_b(&b).ok()?;
                Some((EstimatePair::new(joint.a, b_hat), EstimatePair::new(a, b)))
            }
            Strategy::HintA { hints, .. } => {
                let hint = hints.hint(epoch, &joint.a).ok()?;
                let a = &joint.a + hint;
                let b = self.gram.rls_b_given_a(&a).ok()?;
                Some((joint, EstimatePair::new(a, b)))
            }
            Strategy::KnownB { b } => {
                let a = self.gram.rls_a_given_b(b).ok()?;
                let est = EstimatePair::new(a, b.clone());
                Some((joint, est))
            }
            Strategy::NoHint => Some((joint.clone(), joint)),
        }
    }

    fn boundary(&mut self, t: u64, epoch: usize) {
        let tau = self.taus[epoch - 1];
        let identified = self.identify(epoch);
        let gain = identified
            .as_ref()
            .and_then(|(_, est)| solve_dare(&est.a, &est.b, &self.cfg.q, &self.cfg.r).ok())
            .map(|sol| sol.k);
        let (raw, estimate) = identified.unwrap_or_else(|| {
            let nan = EstimatePair::new(
                DMatrix::from_element(self.cfg.n(), self.cfg.n(), f64::NAN),
                DMatrix::from_element(self.cfg.n(), self.cfg.m(), f64::NAN),
            );
            (nan.clone(), nan)
        });
        let mut record = EpochRecord {
            epoch,
            tau,
            raw,
            estimate,
            gain_norm: gain.as_ref().map(spectral_norm),
            gain: gain.clone(),
            aborted: false,
            mu: None,
            triggered: None,
            gram: self.gram.clone(),
        };

        if self.searching {
            let mu = match &self.strategy {
                Strategy::HintA { mus, .. } => mus[epoch - 1],
                _ => unreachable!("only the A-hint controller searches"),
            };
            let fired = gain
                .as_ref()
                .is_some_and(|k| min_eigenvalue(&(k * k.transpose())) >= 1.5 * mu);
            record.mu = Some(mu);
            record.triggered = Some(fired);
            if fired {
                self.searching = false;
                self.status.n_s = Some(epoch);
                self.enter_epoch(epoch, gain.unwrap());
            } else {
                self.phase = Phase::SearchEpoch(epoch);
                self.explore_std = 0.0;
                if epoch == self.taus.len() {
                    self.status.no_curvature = true;
                }
            }
            self.log.push(record);
            return;
        }

        match gain {
            Some(k) => self.enter_epoch(epoch, k),
            None => {
                record.aborted = true;
                self.abort(t);
            }
        }
        self.log.push(record);
    }

    fn enter_epoch(&mut self, epoch: usize, gain: DMatrix<f64>) {
        self.gain_norm = spectral_norm(&gain);
        self.gain = gain;
        self.phase = Phase::Epoch(epoch);
        self.explore_std = match self.strategy {
            Strategy::NoHint => self.excitation_std() * (self.taus[epoch - 1] as f64).powf(-0.25),
            _ => 0.0,
        };
    }

    fn abort(&mut self, t: u64) {
        self.phase = Phase::Aborted;
        self.gain = self.cfg.k0.clone();
        self.gain_norm = spectral_norm(&self.gain);
        self.explore_std = 0.0;
        self.status.aborted_at = Some(t);
        if let Some(last) = self.log.last_mut() {
            last.aborted = true;
        }
    }

    fn excitation(&self, t: u64, std: f64, rng: &CounterRng) -> DVector<f64> {
        rng.normal_vector(Stream::Excitation, t, self.cfg.m()) * std
    }
}

impl Policy for AdaptiveController {
    fn act(&mut self, t: u64, x: &DVector<f64>, rng: &CounterRng) -> Control {
        if self.phase != Phase::Aborted {
            while self.next_epoch < self.taus.len() && t >= self.taus[self.next_epoch] {
                self.next_epoch += 1;
                self.boundary(t, self.next_epoch);
                if self.phase == Phase::Aborted {
                    break;
                }
            }
        }
        match self.phase {
            Phase::Aborted => Control { u: &self.cfg.k0 * x, excitation: None },
            Phase::Warmup | Phase::SearchEpoch(_) => {
                let eta = self.excitation(t, self.excitation_std(), rng);
                Control { u: &self.cfg.k0 * x + &eta, excitation: Some(eta) }
            }
            Phase::Epoch(_) => {
                if x.norm_squared() > self.cfg.params.x_b || self.gain_norm > self.cfg.params.k {
                    self.abort(t);
                    return Control { u: &self.cfg.k0 * x, excitation: None };
                }
                if self.explore_std > 0.0 {
                    let eta = self.excitation(t, self.explore_std, rng);
                    Control { u: &self.gain * x + &eta, excitation: Some(eta) }
                } else {
                    Control { u: &self.gain * x, excitation: None }
                }
            }
        }
    }

    fn observe(&mut self, x: &DVector<f64>, u: &DVector<f64>, x_next: &DVector<f64>) {
        self.gram.accumulate(x, u, x_next);
    }

    fn phase(&self) -> Phase {
        self.phase
    }

    fn current_gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    fn epoch_log(&self) -> &[EpochRecord] {
        &self.log
    }

    fn hint_audit(&self) -> &[HintRecord] {
        match &self.strategy {
            Strategy::HintB { hints, .. } | Strategy::HintA { hints, .. } => hints.audit(),
            _ => &[],
        }
    }

    fn status(&self) -> ControllerStatus {
        self.status.clone()
    }

    fn gram(&self) -> Option<&GramAccumulator> {
        Some(&self.gram)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ControllerParams;
    use crate::hints::{HintSchedule, OracleHints};

    fn scalar_cfg(tau1: u64, horizon: u64) -> ControllerConfig {
        ControllerConfig {
            params: ControllerParams::practical(5.0, tau1, 1e6, 1.0, 2.0, horizon, 1.0),
            k0: DMatrix::from_element(1, 1, -0.6),
            q: DMatrix::identity(1, 1),
            r: DMatrix::identity(1, 1),
        }
    }

    fn step(a: f64, b: f64, x: f64, u: f64, w: f64) -> f64 {
        a * x + b * u + w
    }

    #[test]
    fn warmup_replays_excitation() {
        let mut c = AdaptiveController::new(scalar_cfg(20, 100), Strategy::NoHint).unwrap();
        let rng = CounterRng::new(11);
        let x = DVector::from_element(1, 0.7);
        let ctl = c.act(3, &x, &rng);
        let eta = rng.normal_vector(Stream::Excitation, 3, 1);
        assert_eq!(ctl.u[0], -0.6 * 0.7 + eta[0]);
        assert_eq!(c.phase(), Phase::Warmup);
    }

    #[test]
    fn large_state_aborts_forever() {
        let mut cfg = scalar_cfg(10, 200);
        cfg.params.x_b = 4.0;
        let taus = [10, 40, 160];
        let hints = OracleHints::new(
            DMatrix::from_element(1, 1, 1.0),
            HintSchedule::exact(HintMode::B, 2.0, &taus),
            CounterRng::new(0),
        );
        let mut c = AdaptiveController::new(cfg, Strategy::HintB { hints: Box::new(hints), external: None }).unwrap();
        let rng = CounterRng::new(1);
        let mut x = 0.0;
        for t in 1..10 {
            let u = c.act(t, &DVector::from_element(1, x), &rng).u[0];
            let xn = step(1.1, 1.0, x, u, rng.normal(Stream::Plant, t as u128));
            c.observe(&DVector::from_element(1, x), &DVector::from_element(1, u), &DVector::from_element(1, xn));
            x = xn;
        }
        let ctl = c.act(10, &DVector::from_element(1, 3.0), &rng);
        assert_eq!(c.phase(), Phase::Aborted);
        assert_eq!(ctl.u[0], -0.6 * 3.0);
        for t in 11..200 {
            let ctl = c.act(t, &DVector::from_element(1, 0.1), &rng);
            assert_eq!(ctl.u[0], -0.6 * 0.1);
            assert!(ctl.excitation.is_none());
        }
        assert_eq!(c.status().aborted_at, Some(10));
        assert!(c.epoch_log()[0].aborted);
        assert_eq!(c.epoch_log().len(), 1);
    }

    #[test]
    fn mismatched_hint_mode_rejected() {
        let hints = OracleHints::new(
            DMatrix::from_element(1, 1, 1.0),
            HintSchedule::exact(HintMode::A, 2.0, &[10]),
            CounterRng::new(0),
        );
        let r = AdaptiveController::new(scalar_cfg(10, 20), Strategy::HintB { hints: Box::new(hints), external: None });
        assert!(r.is_err());
    }
}
