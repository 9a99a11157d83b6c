//! Experiment configuration and the named plant presets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::control::{solve_dare, SystemTruth};
use crate::controllers::{MuSchedule, ParamsMode};

/// Environment variable overriding `seeds.base`.
pub const SEED_ENV: &str = "HINTED_LQR_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "alg1")]
    Alg1,
    #[serde(rename = "alg2")]
    Alg2,
    #[serde(rename = "scalarB")]
    ScalarB,
    /// Certainty equivalence with `B*` given exactly (reference only).
    #[serde(rename = "known-b")]
    KnownB,
    #[serde(rename = "baseline-optimal")]
    Optimal,
    #[serde(rename = "baseline-static")]
    Static,
    #[serde(rename = "baseline-no-hint")]
    NoHint,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::ScalarB => "scalarB",
            Algorithm::KnownB => "known-b",
            Algorithm::Optimal => "baseline-optimal",
            Algorithm::Static => "baseline-static",
            Algorithm::NoHint => "baseline-no-hint",
        }
    }
}

/// Which regret figure enters the summary and the fits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegretEstimator {
    /// `sum of costs - T J*`.
    Realized,
    /// `sum of costs - sum of costs of K* driven by the same noise`.
    #[default]
    Paired,
}

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Named preset; explicit fields below override its entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Initial stabilizing gain, `m x n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default = "default_mode")]
    pub mode: ParamsMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(default)]
    pub mu_schedule: MuSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    /// Variance of the warm-up excitation; defaults to the plant noise variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excitation_var: Option<f64>,
    /// Radius of the external `B` estimates (scalar variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar_eps: Option<f64>,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            tau1: None,
            x_b: None,
            lambda: None,
            k: None,
            r: default_r(),
            mu1: None,
            mu_schedule: MuSchedule::default(),
            c0: None,
            epsilon0: None,
            excitation_var: None,
            scalar_eps: None,
        }
    }
}

fn default_mode() -> ParamsMode {
    ParamsMode::Practical
}

fn default_r() -> f64 {
    2.0
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintSpec {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub adversarial: bool,
    /// `gamma_i = 1`, `E_i = 0`.
    #[serde(default)]
    pub exact: bool,
}

impl Default for HintSpec {
    fn default() -> Self {
        Self { theta: default_theta(), adversarial: false, exact: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub count: usize,
    #[serde(default)]
    pub base: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub hints: HintSpec,
    pub horizons: Vec<u64>,
    pub seeds: SeedSpec,
    #[serde(default)]
    pub regret_estimator: RegretEstimator,
    /// Default output directory; the CLI flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            HarnessError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Applies the seed override from the environment, if set.
    pub fn with_env_overrides(mut self) -> Result<Self, HarnessError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seeds.base = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.horizons.is_empty() {
            return Err(HarnessError::Config("horizons: at least one horizon is required".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) || self.horizons[0] == 0 {
            return Err(HarnessError::Config("horizons: must be positive and strictly increasing".into()));
        }
        if self.seeds.count == 0 {
            return Err(HarnessError::Config("seeds.count: must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.hints.theta) {
            return Err(HarnessError::Config(format!("hints.theta: {} is outside [0, 1]", self.hints.theta)));
        }
        if self.params.r.is_nan() || self.params.r <= 1.0 {
            return Err(HarnessError::Config(format!("params.r: {} must exceed 1", self.params.r)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// A plant together with everything a run needs beyond the controller parameters.
#[derive(Clone, Debug)]
pub struct ResolvedPlant {
    pub name: String,
    pub truth: SystemTruth,
    pub k0: DMatrix<f64>,
    pub c0: f64,
    pub epsilon0: f64,
    /// Suggested practical parameters.
    pub tau1: u64,
    pub x_b: f64,
    pub lambda: f64,
    pub mu1: f64,
}

fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn rows_to_matrix(field: &str, rows: &Rows) -> Result<DMatrix<f64>, HarnessError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(HarnessError::Config(format!("plant.{field}: rows must be non-empty and equally long")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub const PRESETS: [&str; 3] = ["scalar-appendixB", "paper-desk-3x2", "stable-easy"];

/// Built-in plants. `C0` and `epsilon0` were produced by
/// `hinted-lqr calibrate --preset <name>` (200 draws, seed 0) and frozen
/// here, `C0` rounded up.
pub fn preset(name: &str) -> Result<ResolvedPlant, HarnessError> {
    let bad = |e| HarnessError::Config(format!("preset {name}: {e}"));
    let plant = match name {
        "scalar-appendixB" => {
            let one = mat(1, 1, &[1.0]);
            ResolvedPlant {
                name: name.into(),
                truth: SystemTruth::new(mat(1, 1, &[1.1]), one.clone(), one.clone(), one, 1.0).map_err(bad)?,
                k0: mat(1, 1, &[-0.6]),
                c0: 4.79,
                epsilon0: 0.4,
                tau1: 50,
                x_b: 400.0,
                lambda: 1.0,
                mu1: 0.1,
            }
        }
        "paper-desk-3x2" => {
            let a = mat(3, 3, &[1.02, 0.1, 0.0, 0.0, 0.8, 0.1, 0.1, 0.0, 0.7]);
            let b = mat(3, 2, &[1.0, 0.0, 0.2, 0.3, 0.0, 1.0]);
            let q = DMatrix::identity(3, 3);
            let r = DMatrix::identity(2, 2);
            let k0 = solve_dare(&a, &b, &(&q * 10.0), &r).map_err(bad)?.k;
            ResolvedPlant {
                name: name.into(),
                truth: SystemTruth::new(a, b, q, r, 1.0).map_err(bad)?,
                k0,
                c0: 30.2,
                epsilon0: 0.4,
                tau1: 100,
                x_b: 2000.0,
                lambda: 1.0,
                mu1: 0.1,
            }
        }
        "stable-easy" => {
            let a = mat(2, 2, &[0.5, 0.1, 0.0, 0.6]);
            let b = mat(2, 1, &[0.0, 1.0]);
            ResolvedPlant {
                name: name.into(),
                truth: SystemTruth::new(a, b, DMatrix::identity(2, 2), DMatrix::identity(1, 1), 1.0).map_err(bad)?,
                k0: mat(1, 2, &[0.0, 0.0]),
                c0: 2.22,
                epsilon0: 0.4,
                tau1: 50,
                x_b: 500.0,
                lambda: 1.0,
                mu1: 0.01,
            }
        }
        other => {
            return Err(HarnessError::Config(format!(
                "plant.preset: unknown preset {other:?} (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(plant)
}

impl PlantSpec {
    pub fn resolve(&self) -> Result<ResolvedPlant, HarnessError> {
        let mut base = match &self.preset {
            Some(name) => Some(preset(name)?),
            None => None,
        };
        let pick = |field: &str, explicit: &Option<Rows>, fallback: Option<&DMatrix<f64>>| match explicit {
            Some(rows) => rows_to_matrix(field, rows),
            None => fallback
                .cloned()
                .ok_or_else(|| HarnessError::Config(format!("plant.{field}: required without a preset"))),
        };
        let truth = base.as_ref().map(|p| &p.truth);
        let a = pick("a", &self.a, truth.map(|t| &t.a))?;
        let b = pick("b", &self.b, truth.map(|t| &t.b))?;
        let n = a.nrows();
        let m = b.ncols();
        let q = match (&self.q, truth) {
            (Some(rows), _) => rows_to_matrix("q", rows)?,
            (None, Some(t)) => t.q.clone(),
            (None, None) => DMatrix::identity(n, n),
        };
        let r = match (&self.r, truth) {
            (Some(rows), _) => rows_to_matrix("r", rows)?,
            (None, Some(t)) => t.r.clone(),
            (None, None) => DMatrix::identity(m, m),
        };
        let sigma2 = self.sigma2.or(truth.map(|t| t.sigma2)).unwrap_or(1.0);
        let truth = SystemTruth::new(a, b, q, r, sigma2).map_err(|e| HarnessError::Config(format!("plant: {e}")))?;
        let k0 = match &self.k0 {
            Some(rows) => rows_to_matrix("k0", rows)?,
            None => base
                .as_ref()
                .map(|p| p.k0.clone())
                .ok_or_else(|| HarnessError::Config("plant.k0: required without a preset".into()))?,
        };
        if k0.shape() != (m, n) {
            return Err(HarnessError::Config(format!("plant.k0: shape {:?}, expected ({m}, {n})", k0.shape())));
        }
        if truth.closed_loop_radius(&k0) >= 1.0 {
            return Err(HarnessError::Config("plant.k0: does not stabilize the plant".into()));
        }
        Ok(match base.take() {
            Some(p) => ResolvedPlant { truth, k0, ..p },
            None => ResolvedPlant {
                name: "custom".into(),
                truth,
                k0,
                c0: 1.0,
                epsilon0: 0.1,
                tau1: 10 * (n + m) as u64,
                x_b: 1e4,
                lambda: 1.0,
                mu1: 0.1,
            },
        })
    }
}
