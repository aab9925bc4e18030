//! Python bindings. Structured inputs and outputs cross the boundary as the
//! same JSON documents the command line reads and writes.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use defuzz::bench::bundled_suite;
use defuzz::distance::{resolve_targets, DistanceMap, TargetSpec, DEFAULT_RADIUS};
use defuzz::fuzz::{run_campaign, CampaignConfig, Mode, DEFAULT_HALF_LIFE};
use defuzz::predictor::{AttentionReport, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use defuzz::vm::{parse_program, Program, DEFAULT_STEP_LIMIT};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn program(text: &str) -> PyResult<Program> {
    parse_program(text).map_err(err)
}

fn distance_map(text: &str, targets: &str, radius: u32) -> PyResult<(Program, DistanceMap)> {
    let p = program(text)?;
    let spec = TargetSpec::from_json(targets).map_err(err)?;
    let resolved = resolve_targets(&p, &spec, radius).map_err(err)?;
    let dmap = DistanceMap::compute(&p, &resolved);
    Ok((p, dmap))
}

/// Runs a program once; returns the outcome name and the steps taken.
#[pyfunction]
#[pyo3(signature = (program_text, input, step_limit = DEFAULT_STEP_LIMIT))]
pub fn execute(program_text: &str, input: &[u8], step_limit: u64) -> PyResult<(String, u64)> {
    let p = program(program_text)?;
    let r = defuzz::vm::execute(&p, input, step_limit);
    Ok((format!("{:?}", r.outcome), r.steps))
}

/// Distance of every block, keyed by `function::label`.
#[pyfunction]
#[pyo3(signature = (program_text, targets, radius = DEFAULT_RADIUS))]
pub fn block_distances(program_text: &str, targets: &str, radius: u32) -> PyResult<BTreeMap<String, Option<f64>>> {
    let (p, dmap) = distance_map(program_text, targets, radius)?;
    Ok(p.block_ids().map(|id| (p.block_uid(id).to_string(), dmap.block(id))).collect())
}

#[pyfunction]
#[pyo3(signature = (program_text, targets, radius = DEFAULT_RADIUS))]
pub fn function_distances(program_text: &str, targets: &str, radius: u32) -> PyResult<BTreeMap<String, Option<f64>>> {
    let (p, dmap) = distance_map(program_text, targets, radius)?;
    Ok(p.functions.iter().zip(dmap.function_distance).map(|(f, d)| (f.name.clone(), d)).collect())
}

#[pyfunction]
#[pyo3(signature = (norm_distance, elapsed, half_life = DEFAULT_HALF_LIFE))]
pub fn power_multiplier(norm_distance: f64, elapsed: f64, half_life: f64) -> f64 {
    defuzz::fuzz::power_multiplier(norm_distance, elapsed, half_life)
}

#[pyfunction]
pub fn relative_speeds(speeds: Vec<f64>) -> Vec<f64> {
    defuzz::cli::relative_speeds(&speeds)
}

/// Target spec JSON from a JSON list of attention reports.
#[pyfunction]
#[pyo3(signature = (reports, k = DEFAULT_TOP_K, threshold = DEFAULT_THRESHOLD))]
pub fn extract_attention_targets(reports: &str, k: usize, threshold: f64) -> PyResult<String> {
    let reports: Vec<AttentionReport> = serde_json::from_str(reports).map_err(err)?;
    Ok(defuzz::predictor::extract_attention_targets(&reports, k, threshold).to_json())
}

#[pyfunction]
pub fn fixtures() -> Vec<String> {
    bundled_suite().iter().map(|f| f.name().to_string()).collect()
}

/// Program text, ground-truth target spec JSON and seed input of a bundled
/// fixture.
#[pyfunction]
pub fn fixture(name: &str) -> PyResult<(String, String, Vec<u8>)> {
    let f = bundled_suite().into_iter().find(|f| f.name() == name).ok_or_else(|| err(format!("no fixture {name}")))?;
    Ok((f.target.text.clone(), f.target.ground_truth.target_spec().to_json(), f.target.seed.clone()))
}

/// Runs a campaign under the virtual clock and returns its summary. Directed
/// when `targets` is given.
#[pyfunction]
#[pyo3(signature = (program_text, targets = None, seed = None, max_execs = 100_000, rng_seed = 0, deterministic = true, exit_on_fault = false))]
#[allow(clippy::too_many_arguments)]
pub fn fuzz<'py>(
    py: Python<'py>,
    program_text: &str,
    targets: Option<&str>,
    seed: Option<Vec<u8>>,
    max_execs: u64,
    rng_seed: u64,
    deterministic: bool,
    exit_on_fault: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let p = program(program_text)?;
    let spec = targets.map(TargetSpec::from_json).transpose().map_err(err)?;
    let config = CampaignConfig {
        mode: if spec.is_some() { Mode::Directed } else { Mode::CoverageOnly },
        target_spec: spec,
        timeout: f64::INFINITY,
        max_execs: Some(max_execs),
        rng_seed,
        deterministic,
        exit_on_fault,
        ..CampaignConfig::default()
    };
    let r = run_campaign(&p, &config, &[seed.unwrap_or_default()]).map_err(err)?;
    let st = &r.stats;
    let d = PyDict::new(py);
    d.set_item("mode", config.mode.as_str())?;
    d.set_item("execs_done", st.execs_done)?;
    d.set_item("paths_total", st.paths_total)?;
    d.set_item("unique_crashes", st.unique_crashes)?;
    d.set_item("unique_bugs", st.unique_bugs)?;
    d.set_item("unique_hangs", st.unique_hangs)?;
    d.set_item("elapsed", st.elapsed)?;
    d.set_item("first_crash_execs", st.first_crash_execs)?;
    let sites: Vec<String> = r.crashes.iter().chain(&r.hangs).map(|c| format!("{}:{}", c.site.file, c.site.line)).collect();
    d.set_item("fault_sites", sites)?;
    Ok(d)
}

#[pymodule]
fn pydefuzz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(block_distances, m)?)?;
    m.add_function(wrap_pyfunction!(function_distances, m)?)?;
    m.add_function(wrap_pyfunction!(power_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(relative_speeds, m)?)?;
    m.add_function(wrap_pyfunction!(extract_attention_targets, m)?)?;
    m.add_function(wrap_pyfunction!(fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    Ok(())
}
