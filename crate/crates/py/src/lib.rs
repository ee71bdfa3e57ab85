//! Python module `adaptive_lq_py`.

use std::path::Path;

use adaptive_lq::experiment::{self, ExperimentConfig, ModeKind};
use adaptive_lq::lqr::{self, CostWeights, SystemParams};
use adaptive_lq::sim::bounds::BoundConstants;
use adaptive_lq::sim::episode::run_episode as run_one;
use adaptive_lq::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(msg) => PyIOError::new_err(msg),
        Error::ConfigInvalid { .. }
        | Error::InvalidArgument { .. }
        | Error::DimensionMismatch(_)
        | Error::Inadmissible(_)
        | Error::InvalidConstants(_) => PyValueError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err("expected a nonempty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn system(a: &Rows, b: &Rows, q: &Rows, r: &Rows) -> PyResult<(SystemParams, CostWeights)> {
    let params = SystemParams::new(matrix(a)?, matrix(b)?).map_err(to_py)?;
    let weights = CostWeights::new(matrix(q)?, matrix(r)?).map_err(to_py)?;
    Ok((params, weights))
}

/// Stabilizing DARE solution. Returns `(P, K)` with `u = Kx`.
#[pyfunction]
#[pyo3(signature = (a, b, q, r, tol = 1e-12, max_iter = 10_000))]
fn solve_dare(a: Rows, b: Rows, q: Rows, r: Rows, tol: f64, max_iter: usize) -> PyResult<(Rows, Rows)> {
    let (params, weights) = system(&a, &b, &q, &r)?;
    let sol = lqr::solve_dare(&params, &weights, tol, max_iter).map_err(to_py)?;
    Ok((rows(&sol.p), rows(&sol.k)))
}

/// `trace(P)`, the optimal average cost under unit-covariance noise.
#[pyfunction]
fn average_cost(a: Rows, b: Rows, q: Rows, r: Rows) -> PyResult<f64> {
    let (params, weights) = system(&a, &b, &q, &r)?;
    lqr::average_cost(&params, &weights).map_err(to_py)
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    experiment::PRESETS.iter().map(|(n, _)| *n).collect()
}

fn load(config: &str, overrides: Vec<String>) -> PyResult<ExperimentConfig> {
    ExperimentConfig::load(config, &overrides).map_err(to_py)
}

/// One episode of `config` (preset name or TOML path) in `mode`.
#[pyfunction]
#[pyo3(signature = (config, seed = 0, mode = None, overrides = Vec::new()))]
fn run_episode<'py>(
    py: Python<'py>,
    config: &str,
    seed: u64,
    mode: Option<&str>,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, overrides)?;
    let mode: ModeKind = match mode {
        Some(m) => m.parse().map_err(to_py)?,
        None => cfg.mode,
    };
    let consts: BoundConstants = cfg.bound_constants().map_err(to_py)?;
    let episode = cfg.episode_config(mode, &consts).map_err(to_py)?;
    let trace = py.detach(|| run_one(&episode, seed)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("mode", mode.as_str())?;
    out.set_item("seed", trace.seed)?;
    out.set_item("j_star", trace.j_star)?;
    out.set_item("costs", trace.costs())?;
    out.set_item("regret", trace.cumulative_regret())?;
    out.set_item("switches", trace.switches.iter().map(|s| s.step).collect::<Vec<_>>())?;
    out.set_item("held", trace.held_steps.clone())?;
    out.set_item("aborted", trace.aborted.as_ref().map(|e| e.to_string()))?;
    out.set_item("theta_tilde", trace.terminal_theta_tilde().map(|t| rows(&t.theta())))?;
    Ok(out)
}

/// Runs a batch and writes artifacts to `out_dir`. Returns the terminal
/// mean regret per mode.
#[pyfunction]
#[pyo3(signature = (config, out_dir, compare = false, overrides = Vec::new()))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out_dir: &str,
    compare: bool,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, overrides)?;
    let report = py
        .detach(|| {
            if compare {
                experiment::run_comparison(&cfg, Path::new(out_dir))
            } else {
                experiment::run_experiment(&cfg, Path::new(out_dir))
            }
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    for m in &report.modes {
        out.set_item(m.mode.as_str(), m.terminal_mean_regret)?;
    }
    Ok(out)
}

#[pymodule]
fn adaptive_lq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_dare, m)?)?;
    m.add_function(wrap_pyfunction!(average_cost, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let m = matrix(&vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(rows(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
