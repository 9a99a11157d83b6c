//! Seed sweeps over a horizon grid and the files they produce.
//!
//! Output layout under the output directory:
//!
//! * `summary.json` - aggregate per horizon plus the growth fit,
//! * `records.csv` - one row per `(T, seed)` cell,
//! * `epochs/T<T>_s<seed index>.csv` - one file per cell with columns
//!   `i, tau_i, gamma_i, E_norm, delta_norm, K_norm, stable, aborted`,
//! * `traj/T<T>_s<seed index>.csv` - full trajectories (with `--traj-dump`).
//!
//! Epoch files are written as soon as their cell finishes, so an
//! interrupted sweep keeps everything completed so far.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, RegretEstimator, ResolvedPlant};
use super::fit::{self, GrowthFit};
use super::HarnessError;
use crate::controllers::{
    theoretical_params, AdaptiveController, ControllerConfig, ControllerParams, LinearPolicy, ParamsMode, Phase,
    Policy, Strategy, TruthBounds, Variant,
};
use crate::hints::{HintMode, HintSchedule, OracleHints, PerturbedEstimates};
use crate::linalg::{min_eigenvalue, spectral_norm};
use crate::rng::{derive_seed, CounterRng};
use crate::simulation::{rollout, RolloutOptions, RolloutResult, Trajectory};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub traj_dump: bool,
}

/// A validated configuration with its plant resolved.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub plant: ResolvedPlant,
    pub hash: String,
    pub k_star: DMatrix<f64>,
    pub j_star: f64,
}

impl Prepared {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.check()?;
        let plant = cfg.plant.resolve()?;
        let opt = plant
            .truth
            .optimal()
            .map_err(|e| HarnessError::Config(format!("plant: {e}")))?;
        if cfg.algorithm == Algorithm::ScalarB && (plant.truth.n() != 1 || plant.truth.m() != 1) {
            return Err(HarnessError::Config("algorithm scalarB needs a scalar plant".into()));
        }
        Ok(Self {
            hash: cfg.hash(),
            j_star: opt.cost(plant.truth.sigma2),
            k_star: opt.k,
            cfg,
            plant,
        })
    }

    pub fn seed(&self, index: usize) -> u64 {
        derive_seed(self.cfg.seeds.base, index as u64)
    }

    /// Controller parameters for a given horizon.
    pub fn params(&self, horizon: u64) -> Result<ControllerParams, HarnessError> {
        let given = &self.cfg.params;
        let truth = &self.plant.truth;
        let c0 = given.c0.unwrap_or(self.plant.c0);
        let epsilon0 = given.epsilon0.unwrap_or(self.plant.epsilon0);
        let nu = truth
            .gain_cost(&self.plant.k0)
            .map_err(|e| HarnessError::Config(format!("plant.k0: {e}")))?;
        let variant = if self.cfg.algorithm == Algorithm::Alg2 { Variant::HintA } else { Variant::HintB };
        let bounds = TruthBounds {
            alpha0: truth.alpha0(),
            alpha1: truth.alpha1(),
            nu,
            phi: truth.phi(),
            sigma2: truth.sigma2,
            n: truth.n(),
            m: truth.m(),
            mu_star: Some(min_eigenvalue(&(&self.k_star * self.k_star.transpose()))),
        };
        let bad = |e: crate::controllers::ControllerError| HarnessError::Config(format!("params: {e}"));
        let mut p = match given.mode {
            ParamsMode::Theoretical => theoretical_params(&bounds, given.r, horizon, c0, epsilon0, variant).map_err(bad)?,
            ParamsMode::Practical => {
                let k = given
                    .k
                    .unwrap_or_else(|| ((nu + epsilon0 * epsilon0 * c0) / (bounds.alpha0 * truth.sigma2)).sqrt());
                let mut p = ControllerParams::practical(
                    k,
                    given.tau1.unwrap_or(self.plant.tau1),
                    given.x_b.unwrap_or(self.plant.x_b),
                    given.lambda.unwrap_or(self.plant.lambda),
                    given.r,
                    horizon,
                    truth.sigma2,
                );
                p.mu1 = self.plant.mu1;
                p.c0 = c0;
                p.epsilon0 = epsilon0;
                p.nu = nu;
                p
            }
        };
        if let Some(mu1) = given.mu1 {
            p.mu1 = mu1;
        }
        if let Some(v) = given.excitation_var {
            p.excitation_var = v;
        }
        p.mu_schedule = given.mu_schedule;
        p.validate(truth.n(), truth.m()).map_err(bad)?;
        Ok(p)
    }

    /// Builds the policy for one cell. Privileged information leaves this
    /// function only inside hint providers, estimate feeds, or the explicit
    /// reference gains of the baselines.
    pub fn policy(&self, horizon: u64, seed: u64) -> Result<Box<dyn Policy>, HarnessError> {
        let truth = &self.plant.truth;
        let alg = self.cfg.algorithm;
        match alg {
            Algorithm::Optimal => return Ok(Box::new(LinearPolicy::new(self.k_star.clone()))),
            Algorithm::Static => return Ok(Box::new(LinearPolicy::new(self.plant.k0.clone()))),
            _ => {}
        }
        let params = self.params(horizon)?;
        let growth = if alg == Algorithm::Alg2 { 4.0 } else { params.r * params.r };
        let taus = crate::controllers::epoch_schedule(params.tau1, growth, horizon)
            .map_err(|e| HarnessError::Config(format!("params: {e}")))?;
        let hints = &self.cfg.hints;
        let rng = CounterRng::new(seed);
        let schedule = |mode: HintMode| {
            if hints.exact {
                HintSchedule::exact(mode, params.r, &taus)
            } else {
                HintSchedule::default_for(mode, params.r, &taus, hints.theta).with_adversarial(hints.adversarial)
            }
        };
        let strategy = match alg {
            Algorithm::Alg1 => Strategy::HintB {
                hints: Box::new(OracleHints::new(truth.b.clone(), schedule(HintMode::B), rng.clone())),
                external: None,
            },
            Algorithm::ScalarB => {
                let s = if hints.exact {
                    HintSchedule::exact(HintMode::B, params.r, &taus)
                } else {
                    HintSchedule::scalar_variant(params.r, &taus, params.k, hints.theta)
                        .with_adversarial(hints.adversarial)
                };
                let eps = self.cfg.params.scalar_eps.unwrap_or(params.epsilon0 / (4.0 * params.k));
                Strategy::HintB {
                    hints: Box::new(OracleHints::new(truth.b.clone(), s, rng.clone())),
                    external: Some(Box::new(PerturbedEstimates::new(truth.b.clone(), eps, rng.clone()))),
                }
            }
            Algorithm::Alg2 => Strategy::HintA {
                hints: Box::new(OracleHints::new(truth.a.clone(), schedule(HintMode::A), rng.clone())),
                mus: params.mu_schedule.values(params.mu1, taus.len()),
            },
            Algorithm::KnownB => Strategy::KnownB { b: truth.b.clone() },
            Algorithm::NoHint => Strategy::NoHint,
            Algorithm::Optimal | Algorithm::Static => unreachable!(),
        };
        let cfg = ControllerConfig { params, k0: self.plant.k0.clone(), q: truth.q.clone(), r: truth.r.clone() };
        let ctl = AdaptiveController::new(cfg, strategy).map_err(|e| HarnessError::Config(format!("params: {e}")))?;
        Ok(Box::new(ctl))
    }

    /// Runs one `(T, seed index)` cell and returns the raw rollout.
    pub fn rollout(&self, horizon: u64, seed_index: usize, keep_trajectory: bool) -> Result<RolloutResult, HarnessError> {
        let seed = self.seed(seed_index);
        let mut policy = self.policy(horizon, seed)?;
        let mut opts = RolloutOptions::new(seed, horizon);
        opts.keep_trajectory = keep_trajectory;
        opts.reference_gain = Some(self.k_star.clone());
        Ok(rollout(&self.plant.truth, policy.as_mut(), &opts))
    }

    /// Per-epoch diagnostics of a finished cell.
    pub fn epoch_rows(&self, run: &RolloutResult) -> Vec<EpochRow> {
        let truth = &self.plant.truth;
        run.epoch_log
            .iter()
            .map(|rec| {
                let hint = run.hint_audit.iter().find(|h| h.epoch == rec.epoch);
                let delta = rec.estimate.clone().with_truth(truth).delta_norm.unwrap_or(f64::NAN);
                EpochRow {
                    i: rec.epoch,
                    tau_i: rec.tau,
                    gamma_i: hint.map(|h| h.gamma),
                    e_norm: hint.map(|h| h.e_norm()),
                    delta_norm: delta,
                    k_norm: rec.gain_norm,
                    stable: u8::from(rec.gain.as_ref().is_some_and(|k| truth.closed_loop_radius(k) < 1.0)),
                    aborted: u8::from(rec.aborted),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub i: usize,
    pub tau_i: u64,
    pub gamma_i: Option<f64>,
    #[serde(rename = "E_norm")]
    pub e_norm: Option<f64>,
    pub delta_norm: f64,
    #[serde(rename = "K_norm")]
    pub k_norm: Option<f64>,
    pub stable: u8,
    pub aborted: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seed_index: usize,
    pub seed: u64,
    /// The figure selected by the configured estimator.
    pub regret: f64,
    pub regret_realized: f64,
    pub regret_paired: Option<f64>,
    pub aborted: bool,
    pub diverged: bool,
    pub n_s: Option<usize>,
    pub no_curvature: bool,
    /// Per-epoch `||Delta||`, `;`-separated.
    pub delta_norms: String,
    pub config_hash: String,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub algorithm: String,
    #[serde(rename = "T")]
    pub horizons: Vec<u64>,
    pub seeds: usize,
    pub regret_median: Vec<f64>,
    pub regret_iqr: Vec<f64>,
    pub abort_rate: Vec<f64>,
    pub fit: Option<GrowthFit>,
}

pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

struct Cell {
    record: RunRecord,
}

fn run_cell(prep: &Prepared, horizon: u64, seed_index: usize, opts: &RunOptions) -> Result<Cell, HarnessError> {
    let start = Instant::now();
    let run = prep.rollout(horizon, seed_index, opts.traj_dump)?;
    let rows = prep.epoch_rows(&run);
    let realized = if run.diverged { f64::INFINITY } else { run.regret() };
    let paired = run.paired_regret;
    let regret = match prep.cfg.regret_estimator {
        RegretEstimator::Realized => realized,
        RegretEstimator::Paired => paired.unwrap_or(f64::INFINITY),
    };
    if let Some(dir) = &opts.out_dir {
        write_epochs(&dir.join("epochs").join(format!("T{horizon}_s{seed_index}.csv")), &rows)?;
        if let Some(tr) = &run.trajectory {
            write_trajectory(&dir.join("traj").join(format!("T{horizon}_s{seed_index}.csv")), tr)?;
        }
    }
    let record = RunRecord {
        horizon,
        seed_index,
        seed: prep.seed(seed_index),
        regret,
        regret_realized: realized,
        regret_paired: paired,
        aborted: run.final_phase == Phase::Aborted,
        diverged: run.diverged,
        n_s: run.status.n_s,
        no_curvature: run.status.no_curvature,
        delta_norms: rows.iter().map(|r| format!("{:.6e}", r.delta_norm)).collect::<Vec<_>>().join(";"),
        config_hash: prep.hash.clone(),
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok(Cell { record })
}

/// Executes every `(T, seed)` cell, writes the output files when an output
/// directory is given, and returns the sorted records with their summary.
pub fn run_experiment(cfg: ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput, HarnessError> {
    let prep = Prepared::new(cfg)?;
    // Surface parameter problems before spawning work.
    for &t in &prep.cfg.horizons {
        prep.policy(t, prep.seed(0))?;
    }
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir.join("epochs"))?;
        if opts.traj_dump {
            fs::create_dir_all(dir.join("traj"))?;
        }
    }
    let cells: Vec<(u64, usize)> = prep
        .cfg
        .horizons
        .iter()
        .flat_map(|&t| (0..prep.cfg.seeds.count).map(move |s| (t, s)))
        .collect();
    let work = || {
        cells
            .par_iter()
            .map(|&(t, s)| run_cell(&prep, t, s, opts))
            .collect::<Result<Vec<_>, _>>()
    };
    let results = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| HarnessError::Config(format!("workers: {e}")))?
            .install(work),
        None => work(),
    }?;
    let mut records: Vec<RunRecord> = results.into_iter().map(|c| c.record).collect();
    records.sort_by_key(|r| (r.horizon, r.seed_index));
    let summary = summarize(&prep, &records);
    if let Some(dir) = &opts.out_dir {
        write_records(&dir.join("records.csv"), &records)?;
        write_summary(&dir.join("summary.json"), &summary)?;
    }
    Ok(ExperimentOutput { records, summary })
}

/// Aggregates sorted records per horizon and fits the growth when enough
/// data is present.
pub fn summarize(prep: &Prepared, records: &[RunRecord]) -> Summary {
    let horizons = prep.cfg.horizons.clone();
    let mut medians = Vec::new();
    let mut iqrs = Vec::new();
    let mut aborts = Vec::new();
    let mut min_seeds = usize::MAX;
    for &t in &horizons {
        let cell: Vec<&RunRecord> = records.iter().filter(|r| r.horizon == t).collect();
        let values: Vec<f64> = cell.iter().map(|r| r.regret).collect();
        min_seeds = min_seeds.min(values.len());
        medians.push(fit::median(&values));
        iqrs.push(fit::iqr(&values));
        let failed = cell.iter().filter(|r| r.aborted || r.diverged).count();
        aborts.push(failed as f64 / cell.len().max(1) as f64);
    }
    let fit = fit::fit_regret_growth(&horizons, &medians, min_seeds).ok();
    Summary {
        config_hash: prep.hash.clone(),
        algorithm: prep.cfg.algorithm.name().into(),
        horizons,
        seeds: prep.cfg.seeds.count,
        regret_median: medians,
        regret_iqr: iqrs,
        abort_rate: aborts,
        fit,
    }
}

/// Re-fits the growth from a `records.csv` written by a previous run.
pub fn fit_directory(dir: &Path) -> Result<GrowthFit, HarnessError> {
    let path = dir.join("records.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut records: Vec<RunRecord> = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    let mut horizons: Vec<u64> = records.iter().map(|r| r.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut medians = Vec::new();
    let mut min_seeds = usize::MAX;
    for &t in &horizons {
        let values: Vec<f64> = records.iter().filter(|r| r.horizon == t).map(|r| r.regret).collect();
        min_seeds = min_seeds.min(values.len());
        medians.push(fit::median(&values));
    }
    fit::fit_regret_growth(&horizons, &medians, if horizons.is_empty() { 0 } else { min_seeds })
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_epochs(path: &Path, rows: &[EpochRow]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["i", "tau_i", "gamma_i", "E_norm", "delta_norm", "K_norm", "stable", "aborted"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trajectory(path: &Path, tr: &Trajectory) -> Result<(), HarnessError> {
    let n = tr.xs.first().map_or(0, |x| x.len());
    let m = tr.us.first().map_or(0, |u| u.len());
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..n).map(|i| format!("w{i}")));
    header.extend(["cost".to_string(), "phase".to_string()]);
    writeln!(out, "{}", header.join(","))?;
    for t in 0..tr.us.len() {
        let mut fields = vec![(t + 1).to_string()];
        fields.extend(tr.xs[t].iter().map(|v| format!("{v:.9e}")));
        fields.extend(tr.us[t].iter().map(|v| format!("{v:.9e}")));
        fields.extend(tr.ws[t].iter().map(|v| format!("{v:.9e}")));
        fields.push(format!("{:.9e}", tr.costs[t]));
        fields.push(match tr.phases[t] {
            Phase::Warmup => "warmup".into(),
            Phase::Epoch(i) => format!("epoch{i}"),
            Phase::SearchEpoch(i) => format!("search{i}"),
            Phase::Aborted => "aborted".into(),
        });
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// `||K||` of the gain an estimate would produce; convenience for reports.
pub fn gain_norm(k: &DMatrix<f64>) -> f64 {
    spectral_norm(k)
}
