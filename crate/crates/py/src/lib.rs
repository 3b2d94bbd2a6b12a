//! Python module `driveforge`: bundles, labels, QA, dataset emission,
//! curation ledgers and metrics. Structured results come back as plain
//! Python dicts and lists.

use std::path::{Path, PathBuf};

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use forge_core::canonical::{to_canonical_line, to_canonical_pretty};
use forge_core::config::GlobalConfig;
use forge_core::emit::{
    apply_patches, default_ledger_path, emit_dataset, load_dataset, read_ledger, record_status, to_truth_records,
    write_dataset, Stage,
};
use forge_core::ingest::{
    load_bundle_dir, parse_scenario_bundle_with, serialize_bundle, validate_bundle_with, ScenarioBundle,
};
use forge_core::justify::fallback_justification;
use forge_core::meta_action::classify_meta_action;
use forge_core::metrics::{evaluate, parse_prediction_lines, EvalOptions, PredictionRecord};
use forge_core::motion::{bundle_motion_context, render_motion_text};
use forge_core::scene_graph::{build_scene_graph, extract_triplets};
use forge_core::Error;

create_exception!(driveforge, ForgeError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::Validation { .. } | Error::Parse { .. } | Error::Config(_) => PyValueError::new_err(e.to_string()),
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => ForgeError::new_err(other.to_string()),
    }
}

/// Serializes through canonical JSON and hands the text to `json.loads`.
fn to_py<T: Serialize + ?Sized>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let line = to_canonical_line(v).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (line,))?.unbind())
}

#[pyclass(module = "driveforge", name = "Config", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: GlobalConfig,
}

#[pymethods]
impl PyConfig {
    /// `source` is a config file path or "default".
    #[new]
    #[pyo3(signature = (source = "default", seed = None))]
    fn new(source: &str, seed: Option<u64>) -> PyResult<Self> {
        let mut inner = GlobalConfig::load(source).map_err(err)?;
        if source != forge_core::config::DEFAULT_KEYWORD {
            if let Some(dir) = Path::new(source).parent() {
                inner = inner.resolve_paths(dir);
            }
        }
        if let Some(s) = seed {
            inner.seed = s;
        }
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: GlobalConfig::parse(text).map_err(err)?,
        })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn hash(&self) -> PyResult<String> {
        self.inner.hash().map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_canonical_pretty(&self.inner).map_err(err)
    }
}

#[pyclass(module = "driveforge", name = "Bundle", from_py_object)]
#[derive(Clone)]
pub struct PyBundle {
    inner: ScenarioBundle,
}

#[pymethods]
impl PyBundle {
    /// Parses and validates a bundle document.
    #[staticmethod]
    #[pyo3(signature = (text, config = None))]
    fn from_json(text: &str, config: Option<&PyConfig>) -> PyResult<Self> {
        let cfg = cfg_of(config);
        parse_scenario_bundle_with(text.as_bytes(), &cfg.windows, &cfg.vocabulary)
            .map(|inner| PyBundle { inner })
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, config = None))]
    fn load(path: PathBuf, config: Option<&PyConfig>) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_json(&text, config)
    }

    #[getter]
    fn scenario_id(&self) -> String {
        self.inner.scenario_id.clone()
    }

    /// Canonical text; loading it back gives the same bytes.
    fn to_json(&self) -> PyResult<String> {
        serialize_bundle(&self.inner).map_err(err)
    }

    /// (path, message) pairs; empty when the bundle is valid.
    #[pyo3(signature = (config = None))]
    fn validate(&self, config: Option<&PyConfig>) -> Vec<(String, String)> {
        let cfg = cfg_of(config);
        validate_bundle_with(&self.inner, &cfg.windows, &cfg.vocabulary)
            .into_iter()
            .map(|f| (f.path, f.message))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Bundle('{}', {} ego samples)", self.inner.scenario_id, self.inner.ego.len())
    }
}

fn cfg_of(config: Option<&PyConfig>) -> GlobalConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

#[pyfunction]
#[pyo3(signature = (dir, config = None))]
fn load_bundles(dir: PathBuf, config: Option<&PyConfig>) -> PyResult<Vec<PyBundle>> {
    let cfg = cfg_of(config);
    Ok(load_bundle_dir(&dir, &cfg.windows, &cfg.vocabulary)
        .map_err(err)?
        .into_iter()
        .map(|inner| PyBundle { inner })
        .collect())
}

#[pyfunction]
fn scene_graph(py: Python<'_>, bundle: &PyBundle) -> PyResult<Py<PyAny>> {
    to_py(py, &build_scene_graph(&bundle.inner.elements))
}

#[pyfunction]
fn triplets(bundle: &PyBundle) -> PyResult<Vec<String>> {
    let g = build_scene_graph(&bundle.inner.elements);
    Ok(extract_triplets(&g).map_err(err)?.iter().map(ToString::to_string).collect())
}

#[pyfunction]
#[pyo3(signature = (bundle, config = None))]
fn generate_qa(py: Python<'_>, bundle: &PyBundle, config: Option<&PyConfig>) -> PyResult<Py<PyAny>> {
    let cfg = cfg_of(config);
    let lib = cfg.library().map_err(err)?;
    to_py(py, &lib.generate(&bundle.inner, cfg.seed).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (bundle, config = None))]
fn meta_action(bundle: &PyBundle, config: Option<&PyConfig>) -> PyResult<String> {
    let cfg = cfg_of(config);
    Ok(classify_meta_action(&bundle.inner, &cfg.thresholds, &cfg.windows).map_err(err)?.text())
}

/// Template justification; never calls an endpoint.
#[pyfunction]
#[pyo3(signature = (bundle, config = None))]
fn justify(bundle: &PyBundle, config: Option<&PyConfig>) -> PyResult<String> {
    let cfg = cfg_of(config);
    let label = classify_meta_action(&bundle.inner, &cfg.thresholds, &cfg.windows).map_err(err)?;
    let g = build_scene_graph(&bundle.inner.elements);
    Ok(fallback_justification(&label, &extract_triplets(&g).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (bundle, config = None))]
fn motion_text(py: Python<'_>, bundle: &PyBundle, config: Option<&PyConfig>) -> PyResult<Py<PyAny>> {
    let cfg = cfg_of(config);
    let ctx = bundle_motion_context(&bundle.inner, &cfg.windows).map_err(err)?;
    to_py(py, &render_motion_text(&ctx, &cfg.background))
}

/// Emits a dataset from a bundle directory and returns its manifest.
#[pyfunction]
#[pyo3(signature = (bundle_dir, out_dir, stage = "end_to_end", config = None))]
fn emit(py: Python<'_>, bundle_dir: PathBuf, out_dir: PathBuf, stage: &str, config: Option<&PyConfig>) -> PyResult<Py<PyAny>> {
    let cfg = cfg_of(config);
    let stage: Stage = stage.parse().map_err(err)?;
    let bundles = load_bundle_dir(&bundle_dir, &cfg.windows, &cfg.vocabulary).map_err(err)?;
    let ds = py.detach(|| emit_dataset(&bundles, stage, &cfg)).map_err(err)?;
    write_dataset(&out_dir, &ds).map_err(err)?;
    to_py(py, &ds.manifest)
}

/// Status of every sample after replaying the ledger (the dataset's own
/// `patches.jsonl` by default).
#[pyfunction]
#[pyo3(signature = (dataset_dir, ledger = None))]
fn curation_status(py: Python<'_>, dataset_dir: PathBuf, ledger: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let base = load_dataset(&dataset_dir).map_err(err)?;
    let patches = read_ledger(&ledger.unwrap_or_else(|| default_ledger_path(&dataset_dir))).map_err(err)?;
    let patched = apply_patches(&base, &patches).map_err(err)?;
    let statuses: std::collections::BTreeMap<&str, _> = base
        .samples
        .iter()
        .zip(&patched.samples)
        .map(|(b, p)| {
            let own: Vec<_> = patches.iter().filter(|x| x.sample_id == b.id).collect();
            (b.id.as_str(), record_status(b, p, &own))
        })
        .collect();
    to_py(py, &statuses)
}

fn records(path: &Path) -> forge_core::Result<Vec<PredictionRecord>> {
    if path.is_dir() {
        return Ok(to_truth_records(&load_dataset(path)?));
    }
    parse_prediction_lines(&std::fs::read_to_string(path)?)
}

/// Scores predictions (file or dataset dir) against ground truth and
/// returns the report plus findings.
#[pyfunction]
#[pyo3(signature = (pred, truth, l2_convention = None, config = None))]
fn evaluate_files(
    py: Python<'_>,
    pred: PathBuf,
    truth: PathBuf,
    l2_convention: Option<&str>,
    config: Option<&PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = cfg_of(config);
    let opts = EvalOptions {
        l2_convention: match l2_convention {
            Some(c) => c.parse().map_err(err)?,
            None => cfg.l2_convention,
        },
        windows: cfg.windows,
        vocabulary: cfg.vocabulary.clone(),
    };
    let ev = evaluate(&records(&pred).map_err(err)?, &records(&truth).map_err(err)?, &opts).map_err(err)?;
    #[derive(Serialize)]
    struct Out<'a> {
        report: &'a forge_core::metrics::MetricReport,
        findings: &'a [forge_core::Finding],
    }
    to_py(
        py,
        &Out {
            report: &ev.report,
            findings: &ev.findings,
        },
    )
}

#[pymodule]
pub fn driveforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ForgeError", m.py().get_type::<ForgeError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(load_bundles, m)?)?;
    m.add_function(wrap_pyfunction!(scene_graph, m)?)?;
    m.add_function(wrap_pyfunction!(triplets, m)?)?;
    m.add_function(wrap_pyfunction!(generate_qa, m)?)?;
    m.add_function(wrap_pyfunction!(meta_action, m)?)?;
    m.add_function(wrap_pyfunction!(justify, m)?)?;
    m.add_function(wrap_pyfunction!(motion_text, m)?)?;
    m.add_function(wrap_pyfunction!(emit, m)?)?;
    m.add_function(wrap_pyfunction!(curation_status, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_files, m)?)?;
    Ok(())
}
