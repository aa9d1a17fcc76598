//! Python bindings: configuration, the pipeline stages, the encoder, the
//! knowledge bank and single decisions. Structured values cross the boundary
//! as JSON text.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;

use era_core::audit::{read_traces, verify_traces};
use era_core::bank::{BankEntry, KnowledgeBank, Origin, Source};
use era_core::controller::{decide, ControllerConfig, Decision};
use era_core::dynamics::TransitionModel;
use era_core::encoder::{encode, EncoderParams};
use era_core::event::EventList;
use era_core::harness::pipeline;
use era_core::harness::{PolicyKind, RunConfig};
use era_core::kv::KeyValues;
use era_core::sim::Difficulty;
use era_core::{EraError, Vec3};

fn py_err(e: EraError) -> PyErr {
    match e {
        EraError::Io { .. } | EraError::MissingArtifact { .. } => PyIOError::new_err(e.to_string()),
        EraError::UnknownId(_) => PyKeyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(json_err)
}

fn parse_event(json: &str) -> PyResult<EventList> {
    serde_json::from_str(json).map_err(json_err)
}

fn parse_difficulty(name: &str) -> PyResult<Difficulty> {
    Difficulty::ALL
        .into_iter()
        .find(|d| d.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown difficulty {name:?}")))
}

fn parse_kinds(policy: &str) -> PyResult<Vec<PolicyKind>> {
    match policy {
        "era" => Ok(vec![PolicyKind::Era]),
        "expert" => Ok(vec![PolicyKind::Expert]),
        "both" => Ok(vec![PolicyKind::Expert, PolicyKind::Era]),
        _ => Err(PyValueError::new_err(format!("unknown policy {policy:?}"))),
    }
}

/// Run configuration (harness, world, controller and training settings).
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults, optionally overridden by `key = value` text.
    #[new]
    #[pyo3(signature = (text=None, seed=None))]
    fn new(text: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let cfg = match text {
            Some(t) => RunConfig::from_kv(&KeyValues::parse(t, "python").map_err(py_err)?).map_err(py_err)?,
            None => RunConfig::default().finish().map_err(py_err)?,
        };
        let inner = match seed {
            Some(s) => cfg.with_seed(s).map_err(py_err)?,
            None => cfg,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.harness.seed
    }

    fn to_kv(&self) -> String {
        self.inner.to_kv_string()
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={})", self.inner.harness.seed)
    }
}

/// Set encoder plus latent transition model, loaded from `model.json`.
#[pyclass(name = "Model")]
struct PyModel {
    encoder: EncoderParams,
    dynamics: TransitionModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(artifacts: PathBuf) -> PyResult<Self> {
        let m = pipeline::load_model(&artifacts).map_err(py_err)?;
        Ok(Self { encoder: m.encoder(), dynamics: m.dynamics() })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.encoder.d
    }

    #[getter]
    fn sigma_max(&self) -> f64 {
        self.dynamics.sigma_max
    }

    /// Latent code of one JSON event list.
    fn encode(&self, event_json: &str) -> PyResult<Vec<f64>> {
        Ok(encode(&self.encoder, &parse_event(event_json)?).map_err(py_err)?.0)
    }
}

/// Experience store with exact and inverted-file retrieval.
#[pyclass(name = "KnowledgeBank")]
struct PyBank {
    inner: KnowledgeBank,
}

#[pymethods]
impl PyBank {
    #[new]
    #[pyo3(signature = (dim, seed=0))]
    fn new(dim: usize, seed: u64) -> Self {
        Self { inner: KnowledgeBank::new(dim, seed) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: KnowledgeBank::load(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Stores one entry and returns its id.
    #[pyo3(signature = (z, action, reliability=1.0))]
    fn insert(&mut self, z: Vec<f64>, action: (f64, f64, f64), reliability: f64) -> PyResult<u64> {
        let id = self.inner.next_id();
        let entry = BankEntry {
            id,
            z,
            a: Vec3::new(action.0, action.1, action.2),
            r: reliability,
            origin: Origin { episode: 0, step: id, source: Source::Online },
        };
        self.inner.insert(entry).map_err(py_err)?;
        Ok(id)
    }

    fn prune(&mut self, id: u64) -> PyResult<()> {
        self.inner.prune(id).map(|_| ()).map_err(py_err)
    }

    /// Action and reliability of one entry.
    fn get(&self, id: u64) -> PyResult<((f64, f64, f64), f64)> {
        let e = self.inner.get(id).ok_or_else(|| py_err(EraError::UnknownId(id)))?;
        Ok(((e.a.x, e.a.y, e.a.z), e.r))
    }

    /// Builds the index with default sizing.
    fn build_index(&mut self) -> PyResult<()> {
        self.inner.build_default_index().map_err(py_err)
    }

    /// `(id, cosine)` pairs, best first.
    fn search_exact(&self, z: Vec<f64>, k: usize) -> PyResult<Vec<(u64, f64)>> {
        let r = self.inner.search_exact(&z, k).map_err(py_err)?;
        Ok(r.candidates.iter().map(|c| (c.id, c.sim)).collect())
    }

    #[pyo3(signature = (z, k, n_probe=None))]
    fn search_ann(&self, z: Vec<f64>, k: usize, n_probe: Option<usize>) -> PyResult<Vec<(u64, f64)>> {
        let r = match n_probe {
            Some(p) => self.inner.search_ann_probes(&z, k, p),
            None => self.inner.search_ann(&z, k),
        }
        .map_err(py_err)?;
        Ok(r.candidates.iter().map(|c| (c.id, c.sim)).collect())
    }
}

/// One controller decision. Returns `(action or None, trace JSON)`; `None`
/// means the energy filter handed control to the expert.
#[pyfunction]
#[pyo3(signature = (model, bank, event_json, config=None))]
fn decide_event(
    model: &PyModel,
    bank: &PyBank,
    event_json: &str,
    config: Option<&PyConfig>,
) -> PyResult<(Option<(f64, f64, f64)>, String)> {
    let ctrl = config.map_or_else(ControllerConfig::default, |c| c.inner.controller.clone());
    let event = parse_event(event_json)?;
    let (d, trace) = decide(&bank.inner, &model.encoder, &model.dynamics, &ctrl, &event).map_err(py_err)?;
    let action = match d {
        Decision::Action(a) => Some((a.x, a.y, a.z)),
        Decision::Expert => None,
    };
    Ok((action, to_json(&trace)?))
}

/// Writes the demonstration dataset; returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (config, out, episodes=None))]
fn gen_data(config: &PyConfig, out: PathBuf, episodes: Option<usize>) -> PyResult<String> {
    to_json(&pipeline::gen_data(&config.inner, &out, episodes).map_err(py_err)?)
}

#[pyfunction]
fn pretrain(config: &PyConfig, out: PathBuf) -> PyResult<String> {
    to_json(&pipeline::pretrain(&config.inner, &out, None).map_err(py_err)?)
}

/// Runs the curriculum; returns the per-episode log as JSON.
#[pyfunction]
#[pyo3(signature = (config, out, episodes=None))]
fn train(config: &PyConfig, out: PathBuf, episodes: Option<usize>) -> PyResult<String> {
    let (logs, _) = pipeline::train(&config.inner, &out, &out, episodes, false).map_err(py_err)?;
    to_json(&logs)
}

/// Evaluates on one difficulty; returns the metric reports as JSON.
#[pyfunction]
#[pyo3(signature = (config, out, difficulty="medium", seeds=None, policy="both", traces=false))]
fn evaluate(
    config: &PyConfig,
    out: PathBuf,
    difficulty: &str,
    seeds: Option<usize>,
    policy: &str,
    traces: bool,
) -> PyResult<String> {
    let kinds = parse_kinds(policy)?;
    let d = parse_difficulty(difficulty)?;
    let reports = pipeline::eval(&config.inner, &out, &out, None, d, seeds, &kinds, traces).map_err(py_err)?;
    to_json(&reports)
}

/// All stages into `out`; returns the medium reports as JSON.
#[pyfunction]
fn run_all(py: Python<'_>, config: &PyConfig, out: PathBuf) -> PyResult<String> {
    let cfg = config.inner.clone();
    let reports = py.detach(move || pipeline::run_all(&cfg, &out)).map_err(py_err)?;
    to_json(&reports)
}

/// Replays a trace file against the artifacts; returns the audit as JSON.
#[pyfunction]
#[pyo3(signature = (traces, artifacts, config=None))]
fn verify(traces: PathBuf, artifacts: PathBuf, config: Option<&PyConfig>) -> PyResult<String> {
    let ctrl = config.map_or_else(ControllerConfig::default, |c| c.inner.controller.clone());
    let t = read_traces(&traces).map_err(py_err)?;
    let model = pipeline::load_model(&artifacts).map_err(py_err)?;
    let bank = pipeline::load_bank(&artifacts, None).map_err(py_err)?;
    to_json(&verify_traces(&t, &bank, &model.dynamics(), ctrl.margin, ctrl.v_max))
}

#[pymodule]
fn era_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyBank>()?;
    m.add_function(wrap_pyfunction!(decide_event, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
