//! Plant rollout, regret accounting, and event diagnostics on realized runs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::SystemTruth;
use crate::controllers::{ControllerParams, ControllerStatus, EpochRecord, Phase, Policy};
use crate::estimation::GramAccumulator;
use crate::hints::HintRecord;
use crate::linalg::{self, block2, min_eigenvalue};
use crate::rng::{CounterRng, Stream};

/// Any `||x_t||` above this marks the run as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct RolloutOptions {
    pub seed: u64,
    pub horizon: u64,
    /// Plant noise on; with `false` every `w_t` is zero.
    pub noise: bool,
    pub keep_trajectory: bool,
    /// Initial state; `None` means `x_1 = 0`.
    pub x1: Option<DVector<f64>>,
    /// Also roll a fixed gain on the same noise to form the paired regret.
    pub reference_gain: Option<DMatrix<f64>>,
    /// Build a noise-aware Gram accumulator with this ridge weight alongside
    /// the run. Oracle use only; the policy never sees it.
    pub oracle_lambda: Option<f64>,
}

impl RolloutOptions {
    pub fn new(seed: u64, horizon: u64) -> Self {
        Self {
            seed,
            horizon,
            noise: true,
            keep_trajectory: false,
            x1: None,
            reference_gain: None,
            oracle_lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `x_1 ..= x_{T+1}`.
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub ws: Vec<DVector<f64>>,
    /// Excitation mixed into `u_t`, zero where none was used.
    pub etas: Vec<DVector<f64>>,
    pub costs: Vec<f64>,
    pub phases: Vec<Phase>,
    pub seed: u64,
}

impl Trajectory {
    /// `max_t ||x_{t+1} - A x_t - B u_t - w_t||`.
    pub fn dynamics_residual(&self, truth: &SystemTruth) -> f64 {
        (0..self.us.len())
            .map(|t| (&self.xs[t + 1] - &truth.a * &self.xs[t] - &truth.b * &self.us[t] - &self.ws[t]).norm())
            .fold(0.0, f64::max)
    }
}

/// Cumulative cost against `t J*`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretLedger {
    pub j_star: f64,
    /// `cum[t]` is the total cost of steps `1..=t`; `cum[0] = 0`.
    cum: Vec<f64>,
}

impl RegretLedger {
    pub fn new(j_star: f64) -> Self {
        Self { j_star, cum: vec![0.0] }
    }

    pub fn push(&mut self, cost: f64) {
        let last = *self.cum.last().unwrap();
        self.cum.push(last + cost);
    }

    pub fn steps(&self) -> u64 {
        (self.cum.len() - 1) as u64
    }

    pub fn cum_cost(&self, t: u64) -> f64 {
        self.cum[t as usize]
    }

    pub fn total_cost(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn regret_at(&self, t: u64) -> f64 {
        self.cum[t as usize] - t as f64 * self.j_star
    }

    pub fn regret(&self) -> f64 {
        self.regret_at(self.steps())
    }
}

#[derive(Clone, Debug)]
pub struct RolloutResult {
    pub ledger: RegretLedger,
    /// Learner cost minus the cost of the reference gain on the same noise.
    pub paired_regret: Option<f64>,
    pub diverged: bool,
    pub trajectory: Option<Trajectory>,
    pub epoch_log: Vec<EpochRecord>,
    pub hint_audit: Vec<HintRecord>,
    pub status: ControllerStatus,
    pub final_phase: Phase,
    /// Data seen by the policy through step `T`.
    pub final_gram: Option<GramAccumulator>,
    pub oracle_gram: Option<GramAccumulator>,
    pub max_w_norm: f64,
    pub max_eta_norm: f64,
}

impl RolloutResult {
    pub fn regret(&self) -> f64 {
        self.ledger.regret()
    }
}

/// Runs `policy` on the plant for `T` steps.
pub fn rollout(truth: &SystemTruth, policy: &mut dyn Policy, opts: &RolloutOptions) -> RolloutResult {
    let (n, m) = (truth.n(), truth.m());
    let rng = CounterRng::new(opts.seed);
    let sigma = truth.sigma();
    let j_star = truth.optimal_cost().unwrap_or(f64::NAN);
    let mut ledger = RegretLedger::new(j_star);
    let mut x = opts.x1.clone().unwrap_or_else(|| DVector::zeros(n));
    let mut x_ref = x.clone();
    let mut ref_cost = 0.0;
    let mut traj = opts.keep_trajectory.then(|| Trajectory {
        xs: vec![x.clone()],
        us: Vec::new(),
        ws: Vec::new(),
        etas: Vec::new(),
        costs: Vec::new(),
        phases: Vec::new(),
        seed: opts.seed,
    });
    let mut oracle = opts.oracle_lambda.map(|l| GramAccumulator::new(n, m, l));
    let (mut max_w, mut max_eta) = (0.0f64, 0.0f64);
    let mut diverged = false;

    for t in 1..=opts.horizon {
        let ctl = policy.act(t, &x, &rng);
        let w = if opts.noise {
            rng.normal_vector(Stream::Plant, t, n) * sigma
        } else {
            DVector::zeros(n)
        };
        let cost = x.dot(&(&truth.q * &x)) + ctl.u.dot(&(&truth.r * &ctl.u));
        let x_next = &truth.a * &x + &truth.b * &ctl.u + &w;
        ledger.push(cost);
        max_w = max_w.max(w.norm());
        if let Some(eta) = &ctl.excitation {
            max_eta = max_eta.max(eta.norm());
        }
        if let Some(k) = &opts.reference_gain {
            let u_ref = k * &x_ref;
            ref_cost += x_ref.dot(&(&truth.q * &x_ref)) + u_ref.dot(&(&truth.r * &u_ref));
            x_ref = &truth.a * &x_ref + &truth.b * u_ref + &w;
        }
        policy.observe(&x, &ctl.u, &x_next);
        if let Some(g) = oracle.as_mut() {
            g.accumulate_with_noise(&x, &ctl.u, &x_next, &w);
        }
        if let Some(tr) = traj.as_mut() {
            tr.xs.push(x_next.clone());
            tr.etas.push(ctl.excitation.clone().unwrap_or_else(|| DVector::zeros(m)));
            tr.us.push(ctl.u);
            tr.ws.push(w);
            tr.costs.push(cost);
            tr.phases.push(policy.phase());
        }
        x = x_next;
        if x.norm().is_nan() || x.norm() > DIVERGENCE_GUARD {
            diverged = true;
            break;
        }
    }

    RolloutResult {
        paired_regret: (opts.reference_gain.is_some() && !diverged).then(|| ledger.total_cost() - ref_cost),
        ledger,
        diverged,
        trajectory: traj,
        epoch_log: policy.epoch_log().to_vec(),
        hint_audit: policy.hint_audit().to_vec(),
        status: policy.status(),
        final_phase: policy.phase(),
        final_gram: policy.gram().cloned(),
        oracle_gram: oracle,
        max_w_norm: max_w,
        max_eta_norm: max_eta,
    }
}

/// Margins of the high-probability events on one realized run. A margin is
/// `bound side - measured side`; the event holds when it is non-negative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventReport {
    /// `sigma sqrt(15 n log 4T) - max ||w_t||`.
    pub e_w: f64,
    /// Same threshold against `max ||eta_t||`.
    pub e_eta: f64,
    /// `lambda_min(W_{tau_1}) - tau_1 sigma^2 / (40 (2 + k^2))`.
    pub e_big_w: Option<f64>,
    /// Per epoch: `lambda_min(sum x x^T over the epoch) - (len) sigma^2 / 40`.
    pub e_x: Vec<f64>,
    /// Per epoch with `gamma_i < 1`: trace-bound slack.
    pub e_delta: Vec<Option<f64>>,
    pub delta: f64,
}

impl EventReport {
    pub fn holds_w(&self) -> bool {
        self.e_w >= 0.0
    }

    pub fn holds_eta(&self) -> bool {
        self.e_eta >= 0.0
    }

    pub fn holds_big_w(&self) -> bool {
        self.e_big_w.is_some_and(|m| m >= 0.0)
    }

    pub fn holds_x(&self) -> bool {
        self.e_x.iter().all(|&m| m >= 0.0)
    }

    pub fn holds_delta(&self) -> bool {
        self.e_delta.iter().flatten().all(|&m| m >= 0.0)
    }
}

/// Evaluates the events on a finished run.
pub fn check_events(run: &RolloutResult, params: &ControllerParams, truth: &SystemTruth, horizon: u64) -> EventReport {
    let (n, m) = (truth.n(), truth.m());
    let sigma2 = truth.sigma2;
    let t = horizon as f64;
    let threshold = (sigma2 * 15.0 * n as f64 * (4.0 * t).ln()).sqrt();
    let log = &run.epoch_log;

    let e_big_w = log.first().map(|rec| {
        min_eigenvalue(&rec.gram.gram()) - rec.tau as f64 * sigma2 / (40.0 * (2.0 + params.k * params.k))
    });

    let mut e_x = Vec::new();
    for (i, rec) in log.iter().enumerate() {
        let next = log
            .get(i + 1)
            .map(|nx| (&nx.gram.xx, nx.tau))
            .or_else(|| run.final_gram.as_ref().map(|g| (&g.xx, g.count as u64 + 1)));
        let Some((next_xx, end)) = next else { break };
        let len = end.saturating_sub(rec.tau) as f64;
        e_x.push(min_eigenvalue(&(next_xx - &rec.gram.xx)) - len * sigma2 / 40.0);
    }

    let theta_star = truth.theta();
    let e_delta = log
        .iter()
        .map(|rec| {
            let hint = run.hint_audit.iter().find(|h| h.epoch == rec.epoch)?;
            if hint.gamma >= 1.0 || !linalg::is_finite(&rec.estimate.theta()) {
                return None;
            }
            let hg = rec.gram.hinted_gram(hint.mode, hint.gamma).ok()?;
            let delta = rec.estimate.theta() - &theta_star;
            let lhs = (&delta * &hg.augmented * delta.transpose()).trace();
            let w = rec.gram.gram();
            let log_ratio = linalg::log_det_spd(&w)? - (n + m) as f64 * rec.gram.lambda.ln();
            let e = &hint.error;
            let rhs = 6.0 * n as f64 * sigma2 * ((4.0 * t.powi(3)).ln() + log_ratio)
                + 3.0 * rec.gram.lambda * theta_star.norm_squared()
                + 3.0 / (1.0 - hint.gamma) * (e * &hg.base_schur * e.transpose()).trace();
            Some(rhs - lhs)
        })
        .collect();

    EventReport {
        e_w: threshold - run.max_w_norm,
        e_eta: threshold - run.max_eta_norm,
        e_big_w,
        e_x,
        e_delta,
        delta: 1.0 / (4.0 * t.powi(3)),
    }
}

/// Slack of the two block-matrix eigenvalue bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsdMargins {
    /// `lambda_min([[I, K^T], [K, K K^T + p I]]) - 1 / ((1 + k^2)/p + 1)`.
    pub gain_form: f64,
    /// `lambda_min([[(1+p) I, K^T], [K, K K^T]]) - mu p / (mu + p + 1)`.
    pub curvature_form: f64,
}

pub fn psd_bound_check(gain: &DMatrix<f64>, k_cap: f64, p: f64, mu: f64) -> PsdMargins {
    let (m, n) = gain.shape();
    let kt = gain.transpose();
    let kkt = gain * &kt;
    let first = block2(&DMatrix::identity(n, n), &kt, gain, &(&kkt + DMatrix::identity(m, m) * p));
    let second = block2(&(DMatrix::identity(n, n) * (1.0 + p)), &kt, gain, &kkt);
    PsdMargins {
        gain_form: min_eigenvalue(&first) - 1.0 / ((1.0 + k_cap * k_cap) / p + 1.0),
        curvature_form: min_eigenvalue(&second) - mu * p / (mu + p + 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::LinearPolicy;

    fn scalar_truth() -> SystemTruth {
        let one = DMatrix::identity(1, 1);
        SystemTruth::new(DMatrix::from_element(1, 1, 0.5), one.clone(), one.clone(), one, 1.0).unwrap()
    }

    #[test]
    fn noiseless_zero_start_stays_at_zero() {
        let truth = scalar_truth();
        let mut p = LinearPolicy::new(DMatrix::from_element(1, 1, -0.2));
        let mut opts = RolloutOptions::new(1, 50);
        opts.noise = false;
        let run = rollout(&truth, &mut p, &opts);
        assert_eq!(run.ledger.total_cost(), 0.0);
        let j = truth.optimal_cost().unwrap();
        assert!((run.regret() + 50.0 * j).abs() < 1e-12);
    }

    #[test]
    fn first_step_is_b_u_plus_w() {
        let truth = scalar_truth();
        let mut p = LinearPolicy::new(DMatrix::from_element(1, 1, -0.2));
        let mut opts = RolloutOptions::new(5, 1);
        opts.keep_trajectory = true;
        let run = rollout(&truth, &mut p, &opts);
        let tr = run.trajectory.unwrap();
        assert_eq!(tr.xs[1], &truth.b * &tr.us[0] + &tr.ws[0]);
        assert_eq!(tr.dynamics_residual(&truth), 0.0);
    }

    #[test]
    fn ledger_telescopes() {
        let mut l = RegretLedger::new(0.5);
        for c in [1.0, 2.0, 0.25] {
            l.push(c);
        }
        assert_eq!(l.regret_at(0), 0.0);
        assert_eq!(l.regret_at(2) - l.regret_at(1), 2.0 - 0.5);
        assert_eq!(l.regret(), 3.25 - 1.5);
    }

    #[test]
    fn psd_margins_closed_forms() {
        let zero = DMatrix::zeros(1, 1);
        let m = psd_bound_check(&zero, 1.0, 1.0, 1.0);
        // Block matrix is the identity; bound is 1/3.
        assert!((m.gain_form - (1.0 - 1.0 / 3.0)).abs() < 1e-12);

        // [[2, 1], [1, 1]] has smallest eigenvalue (3 - sqrt 5)/2.
        let one = DMatrix::from_element(1, 1, 1.0);
        let m = psd_bound_check(&one, 1.0, 1.0, 1.0);
        let lmin = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((m.curvature_form - (lmin - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_event_margin_is_threshold() {
        let truth = scalar_truth();
        let mut p = LinearPolicy::new(DMatrix::from_element(1, 1, -0.2));
        let mut opts = RolloutOptions::new(1, 100);
        opts.noise = false;
        let run = rollout(&truth, &mut p, &opts);
        let params = ControllerParams::practical(2.0, 10, 10.0, 1.0, 2.0, 100, 1.0);
        let rep = check_events(&run, &params, &truth, 100);
        let thr = (15.0 * 400f64.ln()).sqrt();
        assert!((rep.e_w - thr).abs() < 1e-12);
    }
}
