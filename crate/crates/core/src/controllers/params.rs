//! Controller parameters, their theoretical formulas, and epoch schedules.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ControllerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamsMode {
    Theoretical,
    Practical,
}

/// Which hinted controller a parameter set is meant for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Hint on `B`, epochs grow by `r^2`.
    HintB,
    /// Hint on `A`, epochs grow by 4, curvature search.
    HintA,
}

/// Direction of the curvature threshold sequence of the A-hint controller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuSchedule {
    /// `mu_i = mu_1 2^{i-1}`.
    #[default]
    Doubling,
    /// `mu_i = mu_1 2^{-(i-1)}`.
    Halving,
}

impl MuSchedule {
    pub fn values(self, mu1: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| match self {
                MuSchedule::Doubling => mu1 * 2f64.powi(i as i32),
                MuSchedule::Halving => mu1 * 2f64.powi(-(i as i32)),
            })
            .collect()
    }
}

/// Problem-level constants a controller may know without knowing the plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthBounds {
    pub alpha0: f64,
    pub alpha1: f64,
    /// Upper bound on the cost of the initial gain.
    pub nu: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub n: usize,
    pub m: usize,
    /// Smallest eigenvalue of `K* K*^T` (A-hint only).
    pub mu_star: Option<f64>,
}

/// Scalar parameters shared by all epoch-based controllers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Gain-norm cap.
    pub k: f64,
    pub ell: f64,
    /// Warm-up length; the first epoch starts at `t = tau1`.
    pub tau1: u64,
    pub r: f64,
    /// Cap on `||x_t||^2`.
    pub x_b: f64,
    pub lambda: f64,
    pub p: f64,
    pub mu1: f64,
    pub mu_star: Option<f64>,
    pub c0: f64,
    pub epsilon0: f64,
    pub nu: f64,
    pub horizon: u64,
    pub mode: ParamsMode,
    pub mu_schedule: MuSchedule,
    /// Variance of the excitation `eta_t` during warm-up and search.
    pub excitation_var: f64,
}

impl ControllerParams {
    /// Desk-scale parameters: `tau1`, `x_b` and `lambda` chosen by the user;
    /// the derived constants follow the same formulas as the theoretical mode.
    #[allow(clippy::too_many_arguments)]
    pub fn practical(k: f64, tau1: u64, x_b: f64, lambda: f64, r: f64, horizon: u64, excitation_var: f64) -> Self {
        Self {
            k,
            ell: 1.0 / (2.0 * k * k),
            tau1,
            r,
            x_b,
            lambda,
            p: r * r / (2.0 + k * k),
            mu1: 0.0,
            mu_star: None,
            c0: 0.0,
            epsilon0: 0.0,
            nu: 0.0,
            horizon,
            mode: ParamsMode::Practical,
            mu_schedule: MuSchedule::Doubling,
            excitation_var,
        }
    }

    pub fn with_mu(mut self, mu1: f64, schedule: MuSchedule) -> Self {
        self.mu1 = mu1;
        self.mu_schedule = schedule;
        self
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), ControllerError> {
        let positive = [
            ("k", self.k),
            ("x_b", self.x_b),
            ("lambda", self.lambda),
            ("excitation_var", self.excitation_var),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControllerError::InvalidParam(format!("{name} = {v} must be positive")));
            }
        }
        if self.r.is_nan() || self.r <= 1.0 {
            return Err(ControllerError::InvalidParam(format!("r = {} must exceed 1", self.r)));
        }
        if self.tau1 == 0 {
            return Err(ControllerError::InvalidParam("tau1 must be at least 1".into()));
        }
        if self.mode == ParamsMode::Practical && (self.tau1 as usize) < n + m {
            return Err(ControllerError::InvalidParam(format!(
                "practical tau1 = {} is below n + m = {}",
                self.tau1,
                n + m
            )));
        }
        if self.tau1 > self.horizon {
            return Err(ControllerError::HorizonTooShort { tau1: self.tau1, horizon: self.horizon });
        }
        Ok(())
    }
}

/// Parameters plus the known quantities every controller needs: the
/// stabilizing initial gain and the cost matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub params: ControllerParams,
    pub k0: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ControllerConfig {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }
}

/// `x_b = 135 n k^2 sigma^2 max{(1+phi)^2 k^6, 4 k^6} log(4T)`, taking
/// `log(4T)` directly.
pub fn state_cap(n: usize, k: f64, sigma2: f64, phi: f64, log_4t: f64) -> f64 {
    let k6 = k.powi(6);
    135.0 * n as f64 * k * k * sigma2 * ((1.0 + phi).powi(2) * k6).max(4.0 * k6) * log_4t
}

/// Worst-case parameters: the constants that carry the regret guarantee.
/// They are valid but astronomically large at desk scale.
pub fn theoretical_params(
    bounds: &TruthBounds,
    r: f64,
    horizon: u64,
    c0: f64,
    epsilon0: f64,
    variant: Variant,
) -> Result<ControllerParams, ControllerError> {
    for (name, v) in [
        ("alpha0", bounds.alpha0),
        ("sigma2", bounds.sigma2),
        ("nu", bounds.nu),
        ("epsilon0", epsilon0),
        ("r", r),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ControllerError::InvalidParam(format!("{name} = {v} must be positive")));
        }
    }
    if c0 < 0.0 {
        return Err(ControllerError::InvalidParam(format!("C0 = {c0} must be non-negative")));
    }
    let TruthBounds { alpha0, nu, phi, sigma2, n, m, .. } = *bounds;
    let k = ((nu + epsilon0 * epsilon0 * c0) / (alpha0 * sigma2)).sqrt();
    let x_b = state_cap(n, k, sigma2, phi, (4.0 * horizon as f64).ln());
    let lambda = (1.0 + k).powi(2) * x_b;
    let k2 = k * k;
    let scale = 240.0 * lambda * (1.0 + phi * phi) * (n + m) as f64 / (epsilon0 * epsilon0 * sigma2);
    let (p, tau1, mu1, mu_star, r) = match variant {
        Variant::HintB => {
            let p = r * r / (2.0 + k2);
            let tau1 = scale * ((1.0 + k2) / p.min(1.0) + 1.0);
            (p, tau1, 0.0, None, r)
        }
        Variant::HintA => {
            let mu_star = bounds
                .mu_star
                .filter(|v| *v > 0.0)
                .ok_or_else(|| ControllerError::InvalidParam("A-hint parameters need mu* > 0".into()))?;
            let p = 4.0 / (2.0 + k2);
            let tau1 = scale * (2.0 + k2).max((mu_star + 2.0 * p + 2.0) / (2.0 * mu_star * p));
            (p, tau1, 4.0 * k * c0 * epsilon0, Some(mu_star), 2.0)
        }
    };
    let tau1 = if tau1.ceil() >= u64::MAX as f64 { u64::MAX } else { tau1.ceil() as u64 };
    Ok(ControllerParams {
        k,
        ell: 1.0 / (2.0 * k2),
        tau1,
        r,
        x_b,
        lambda,
        p,
        mu1,
        mu_star,
        c0,
        epsilon0,
        nu,
        horizon,
        mode: ParamsMode::Theoretical,
        mu_schedule: MuSchedule::Doubling,
        excitation_var: sigma2,
    })
}

/// Epoch start times `tau_i = tau1 growth^{i-1}` for every `i` with
/// `tau_i <= T`. The (implicit) end of the last epoch is `T + 1`.
///
/// `growth` is `r^2` for the B-hint controller and 4 for the A-hint one.
pub fn epoch_schedule(tau1: u64, growth: f64, horizon: u64) -> Result<Vec<u64>, ControllerError> {
    if tau1 == 0 {
        return Err(ControllerError::InvalidParam("tau1 must be at least 1".into()));
    }
    if growth.is_nan() || growth <= 1.0 {
        return Err(ControllerError::InvalidParam(format!("epoch growth {growth} must exceed 1")));
    }
    if tau1 > horizon {
        return Err(ControllerError::HorizonTooShort { tau1, horizon });
    }
    let mut taus = vec![tau1];
    for i in 1.. {
        let next = (tau1 as f64 * growth.powi(i)).round();
        if next > horizon as f64 {
            break;
        }
        let next = next as u64;
        if next <= *taus.last().unwrap() {
            return Err(ControllerError::InvalidParam(format!("epoch growth {growth} too small to advance")));
        }
        taus.push(next);
    }
    Ok(taus)
}
