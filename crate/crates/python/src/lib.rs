//! Python bindings. Matrices cross the boundary as lists of rows (numpy
//! arrays are accepted through the sequence protocol).

use hinted_lqr::control;
use hinted_lqr::controllers::epoch_schedule as schedule_taus;
use hinted_lqr::estimation::GramAccumulator;
use hinted_lqr::harness::{fit, run, ExperimentConfig};
use hinted_lqr::hints::{HintMode, HintSchedule};
use hinted_lqr::linalg;
use hinted_lqr::simulation;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Rows to a matrix; every row must have the same length.
pub fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err("matrix must be non-empty".into());
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(format!("row {bad} has {} entries, expected {c}", rows[bad].len()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn parse_mode(mode: &str) -> Result<HintMode, String> {
    match mode {
        "B" | "b" => Ok(HintMode::B),
        "A" | "a" => Ok(HintMode::A),
        other => Err(format!("hint mode must be \"A\" or \"B\", got {other:?}")),
    }
}

fn matrix(rows: Rows) -> PyResult<DMatrix<f64>> {
    to_matrix(&rows).map_err(value_error)
}

/// `(P, K, iterations)` of the Riccati equation.
#[pyfunction]
fn solve_dare(a: Rows, b: Rows, q: Rows, r: Rows) -> PyResult<(Rows, Rows, usize)> {
    let sol = control::solve_dare(&matrix(a)?, &matrix(b)?, &matrix(q)?, &matrix(r)?).map_err(value_error)?;
    Ok((to_rows(&sol.p), to_rows(&sol.k), sol.iterations))
}

/// `P = M + A^T P A` for a stable `A`.
#[pyfunction]
fn lyapunov_cost(a_cl: Rows, m: Rows) -> PyResult<Rows> {
    let p = control::solve_lyapunov_cost(&matrix(a_cl)?, &matrix(m)?).map_err(value_error)?;
    Ok(to_rows(&p))
}

/// `sigma^2 Tr(P_K)` of a stabilizing gain.
#[pyfunction]
fn gain_cost(a: Rows, b: Rows, q: Rows, r: Rows, k: Rows, sigma2: f64) -> PyResult<f64> {
    control::gain_cost(&matrix(a)?, &matrix(b)?, &matrix(q)?, &matrix(r)?, &matrix(k)?, sigma2).map_err(value_error)
}

#[pyfunction]
fn spectral_radius(a: Rows) -> PyResult<f64> {
    Ok(linalg::spectral_radius(&matrix(a)?))
}

/// `(gain_form, curvature_form)` eigenvalue margins.
#[pyfunction]
fn psd_bound_check(k: Rows, k_cap: f64, p: f64, mu: f64) -> PyResult<(f64, f64)> {
    let m = simulation::psd_bound_check(&matrix(k)?, k_cap, p, mu);
    Ok((m.gain_form, m.curvature_form))
}

#[pyfunction]
fn epoch_schedule(tau1: u64, growth: f64, horizon: u64) -> PyResult<Vec<u64>> {
    schedule_taus(tau1, growth, horizon).map_err(value_error)
}

/// `(gammas, error norms)` of the default schedule.
#[pyfunction]
fn hint_schedule(mode: &str, r: f64, taus: Vec<u64>, theta: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = HintSchedule::default_for(parse_mode(mode).map_err(value_error)?, r, &taus, theta);
    if !s.validate().pass {
        return Err(value_error("schedule violates its own constraints"));
    }
    Ok((s.gammas, s.e_norms))
}

/// Growth fit of median regret per horizon.
#[pyfunction]
fn fit_growth<'py>(py: Python<'py>, horizons: Vec<u64>, medians: Vec<f64>, seeds: usize) -> PyResult<Bound<'py, PyDict>> {
    let f = fit::fit_regret_growth(&horizons, &medians, seeds).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("c_log2", f.c_log2)?;
    d.set_item("alpha", f.alpha)?;
    d.set_item("r2_log2", f.r2_log2)?;
    d.set_item("r2_power", f.r2_power)?;
    Ok(d)
}

/// Runs a JSON experiment config and returns the summary as JSON text.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None, workers=None))]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: Option<String>, workers: Option<usize>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_error)?;
    let opts = run::RunOptions { out_dir: out_dir.map(Into::into), workers, traj_dump: false };
    let out = py.detach(|| run::run_experiment(cfg, &opts)).map_err(value_error)?;
    serde_json::to_string(&out.summary).map_err(value_error)
}

/// Ridge-regression sufficient statistics.
#[pyclass(name = "GramAccumulator")]
struct PyGram {
    inner: GramAccumulator,
}

#[pymethods]
impl PyGram {
    #[new]
    #[pyo3(signature = (n, m, lam=1.0))]
    fn new(n: usize, m: usize, lam: f64) -> PyResult<Self> {
        if n == 0 || m == 0 || lam.is_nan() || lam <= 0.0 {
            return Err(value_error("need n, m >= 1 and lam > 0"));
        }
        Ok(Self { inner: GramAccumulator::new(n, m, lam) })
    }

    fn accumulate(&mut self, x: Vec<f64>, u: Vec<f64>, x_next: Vec<f64>) -> PyResult<()> {
        let (n, m) = (self.inner.n(), self.inner.m());
        if x.len() != n || u.len() != m || x_next.len() != n {
            return Err(value_error(format!("expected x, x_next of length {n} and u of length {m}")));
        }
        self.inner.accumulate(&DVector::from_vec(x), &DVector::from_vec(u), &DVector::from_vec(x_next));
        Ok(())
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count
    }

    fn gram(&self) -> Rows {
        to_rows(&self.inner.gram())
    }

    /// Joint ridge estimate `(A, B)`.
    fn rls_joint(&self) -> PyResult<(Rows, Rows)> {
        let e = self.inner.rls_joint().map_err(value_error)?;
        Ok((to_rows(&e.a), to_rows(&e.b)))
    }

    fn rls_a_given_b(&self, b: Rows) -> PyResult<Rows> {
        Ok(to_rows(&self.inner.rls_a_given_b(&matrix(b)?).map_err(value_error)?))
    }

    fn rls_b_given_a(&self, a: Rows) -> PyResult<Rows> {
        Ok(to_rows(&self.inner.rls_b_given_a(&matrix(a)?).map_err(value_error)?))
    }

    /// `(Y-hat, Y)` of the hint-augmented Gram.
    fn hinted_schur(&self, mode: &str, gamma: f64) -> PyResult<(Rows, Rows)> {
        let h = self
            .inner
            .hinted_gram(parse_mode(mode).map_err(value_error)?, gamma)
            .map_err(value_error)?;
        Ok((to_rows(&h.schur), to_rows(&h.base_schur)))
    }
}

/// Adds every binding to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_dare, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_cost, m)?)?;
    m.add_function(wrap_pyfunction!(gain_cost, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(psd_bound_check, m)?)?;
    m.add_function(wrap_pyfunction!(epoch_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(hint_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(fit_growth, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyGram>()?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "hinted_lqr")]
fn hinted_lqr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
