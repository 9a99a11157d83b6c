//! Epoch-based adaptive controllers and comparison baselines.
//!
//! Controllers never receive the plant. Privileged information reaches them
//! only through a [`HintProvider`](crate::hints::HintProvider), an
//! [`EstimateFeed`](crate::hints::EstimateFeed), or (for the reference
//! baselines) an explicitly passed matrix.

mod adaptive;
mod params;

pub use adaptive::{AdaptiveController, EpochRecord, Strategy};
pub use params::{
    epoch_schedule, state_cap, theoretical_params, ControllerConfig, ControllerParams, MuSchedule, ParamsMode,
    TruthBounds, Variant,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::hints::HintRecord;
use crate::rng::CounterRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("warm-up length tau1 = {tau1} exceeds the horizon T = {horizon}")]
    HorizonTooShort { tau1: u64, horizon: u64 },
    #[error("invalid controller parameter: {0}")]
    InvalidParam(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    /// Exploiting the gain computed at epoch `i` (1-based).
    Epoch(usize),
    /// Curvature search of the A-hint controller, epoch `i`.
    SearchEpoch(usize),
    Aborted,
}

impl Phase {
    /// Position in the monotone order Warmup < search/epochs < Aborted.
    pub fn rank(self) -> (u8, usize) {
        match self {
            Phase::Warmup => (0, 0),
            Phase::SearchEpoch(i) => (1, 2 * i),
            Phase::Epoch(i) => (1, 2 * i + 1),
            Phase::Aborted => (2, 0),
        }
    }
}

/// Action plus the random excitation mixed into it, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct Control {
    pub u: DVector<f64>,
    pub excitation: Option<DVector<f64>>,
}

/// Terminal diagnostics of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ControllerStatus {
    /// Epoch at which the A-hint curvature test fired.
    pub n_s: Option<usize>,
    /// The curvature test never fired.
    pub no_curvature: bool,
    /// Step at which the controller aborted.
    pub aborted_at: Option<u64>,
}

/// A feedback policy driven step by step by the simulator.
///
/// `act` is called once for every `t = 1..=T` in order, followed by
/// `observe` with the realized transition.
pub trait Policy: Send {
    fn act(&mut self, t: u64, x: &DVector<f64>, rng: &CounterRng) -> Control;

    fn observe(&mut self, _x: &DVector<f64>, _u: &DVector<f64>, _x_next: &DVector<f64>) {}

    fn phase(&self) -> Phase;

    fn current_gain(&self) -> &DMatrix<f64>;

    fn epoch_log(&self) -> &[EpochRecord] {
        &[]
    }

    fn hint_audit(&self) -> &[HintRecord] {
        &[]
    }

    fn status(&self) -> ControllerStatus {
        ControllerStatus::default()
    }

    /// All data accumulated so far, if the policy learns.
    fn gram(&self) -> Option<&crate::estimation::GramAccumulator> {
        None
    }
}

/// Fixed linear feedback `u = K x`. Serves as the optimal (`K*`) and the
/// static (`K0`) baseline.
#[derive(Clone, Debug)]
pub struct LinearPolicy {
    gain: DMatrix<f64>,
}

impl LinearPolicy {
    pub fn new(gain: DMatrix<f64>) -> Self {
        Self { gain }
    }
}

impl Policy for LinearPolicy {
    fn act(&mut self, _t: u64, x: &DVector<f64>, _rng: &CounterRng) -> Control {
        Control { u: &self.gain * x, excitation: None }
    }

    fn phase(&self) -> Phase {
        Phase::Epoch(1)
    }

    fn current_gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_order() {
        assert!(Phase::Warmup.rank() < Phase::SearchEpoch(1).rank());
        assert!(Phase::SearchEpoch(1).rank() < Phase::Epoch(1).rank());
        assert!(Phase::Epoch(1).rank() < Phase::SearchEpoch(2).rank());
        assert!(Phase::Epoch(9).rank() < Phase::Aborted.rank());
    }

    #[test]
    fn linear_policy_is_linear() {
        let mut p = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[1.0, -2.0]));
        let c = p.act(1, &DVector::from_column_slice(&[3.0, 1.0]), &CounterRng::new(0));
        assert_eq!(c.u[0], 1.0);
        assert!(c.excitation.is_none());
    }
}
