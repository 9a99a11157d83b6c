//! Regret-growth fits: `R = c log^2 T + d` against `R = e^b T^alpha`.

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const MIN_HORIZONS: usize = 4;
pub const MIN_SEEDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Slope of the `log^2 T` fit.
    pub c_log2: f64,
    /// Exponent of the power-law fit.
    pub alpha: f64,
    /// Coefficient of determination of each fit, both measured on the
    /// regret values themselves so they are comparable.
    pub r2_log2: f64,
    pub r2_power: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn r_squared(y: &[f64], fitted: &[f64]) -> f64 {
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Fits median regret per horizon. `seeds_per_horizon` is the smallest
/// number of runs behind any median.
pub fn fit_regret_growth(horizons: &[u64], medians: &[f64], seeds_per_horizon: usize) -> Result<GrowthFit, HarnessError> {
    if horizons.len() != medians.len() {
        return Err(HarnessError::Config("fit: horizons and medians differ in length".into()));
    }
    if horizons.len() < MIN_HORIZONS || seeds_per_horizon < MIN_SEEDS {
        return Err(HarnessError::InsufficientData(format!(
            "{} horizons with {} seeds each; need at least {MIN_HORIZONS} horizons and {MIN_SEEDS} seeds",
            horizons.len(),
            seeds_per_horizon
        )));
    }
    if let Some(bad) = medians.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(HarnessError::InsufficientData(format!(
            "median regret {bad} is not positive; the power-law fit needs positive values"
        )));
    }
    let log2: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln().powi(2)).collect();
    let (c_log2, d) = linear_fit(&log2, medians);
    let fitted_log2: Vec<f64> = log2.iter().map(|l| c_log2 * l + d).collect();

    let ln_t: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let ln_r: Vec<f64> = medians.iter().map(|r| r.ln()).collect();
    let (alpha, b) = linear_fit(&ln_t, &ln_r);
    let fitted_power: Vec<f64> = ln_t.iter().map(|l| (alpha * l + b).exp()).collect();

    Ok(GrowthFit {
        c_log2,
        alpha,
        r2_log2: r_squared(medians, &fitted_log2),
        r2_power: r_squared(medians, &fitted_power),
    })
}

/// Median of a sample (mean of the two middle values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}
