//! Python bindings. Structured values cross the boundary as JSON strings with
//! the same schema the CLI writes.

use okpitch::cli::{refine_record, RefinedPoint};
use okpitch::equilibria::{
    continue_branch, detect_bifurcations, trivial_branch, BifurcationRecord, BranchSample, EquilibriaError, StepPolicy,
};
use okpitch::validation::{make_certificate, CertConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn parse<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn dump<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn runtime(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// `(k pi)^4 / ((k pi)^2 - sigma)`, or None when the mode never destabilizes.
#[pyfunction]
fn primary_lambda(sigma: f64, k: usize) -> Option<f64> {
    okpitch::model::primary_lambda(sigma, k)
}

/// Samples of the mode-`mode` primary branch up to `lambda_max` as JSON;
/// mode 0 is the trivial branch. A branch stopped by a fold keeps its samples.
#[pyfunction]
#[pyo3(signature = (sigma, mode, lambda_max, n=64))]
fn branch(sigma: f64, mode: usize, lambda_max: f64, n: usize) -> PyResult<String> {
    let samples: Vec<BranchSample> = if mode == 0 {
        trivial_branch(sigma, (0.0, lambda_max), 1.0, n).map_err(runtime)?
    } else {
        match continue_branch(sigma, mode, (0.0, lambda_max), n, &StepPolicy::default()) {
            Ok(s) => s,
            Err(EquilibriaError::ContinuationFailure { samples, .. }) if samples.len() >= 2 => samples,
            Err(e) => return Err(runtime(e)),
        }
    };
    dump(&samples)
}

#[pyfunction]
#[pyo3(signature = (sigma, branch_json, n_sym=None))]
fn detect(sigma: f64, branch_json: &str, n_sym: Option<usize>) -> PyResult<String> {
    let samples: Vec<BranchSample> = parse("branch", branch_json)?;
    dump(&detect_bifurcations(sigma, &samples, n_sym).map_err(runtime)?)
}

#[pyfunction]
fn refine(record_json: &str, n: usize) -> PyResult<String> {
    let rec: BifurcationRecord = parse("record", record_json)?;
    dump(&refine_record(&rec, n).map_err(runtime)?)
}

#[pyfunction]
#[pyo3(signature = (point_json, config_json=None))]
fn validate(point_json: &str, config_json: Option<&str>) -> PyResult<String> {
    let p: RefinedPoint = parse("point", point_json)?;
    let cfg: CertConfig = match config_json {
        Some(s) => parse("config", s)?,
        None => CertConfig::default(),
    };
    let c = make_certificate(p.sigma, &p.w, &p.ell, &cfg).map_err(runtime)?;
    dump(&c)
}

/// Runs the command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    okpitch::cli::run(std::iter::once("okpitch".to_string()).chain(args))
}

#[pymodule]
fn okpitch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(primary_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(branch, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
