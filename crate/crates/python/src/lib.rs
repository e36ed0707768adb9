use std::error::Error;
use std::path::PathBuf;

use gripnet::graph::{load_edge_list, HeteroGraph};
use gripnet::harness::{self, Prepared, RunConfig, SyntheticSpec};
use gripnet::heads::{EpochRecord, Model};
use gripnet::metrics;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn chain(e: &dyn Error) -> String {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    msg
}

fn value_err(e: impl Error) -> PyErr {
    PyValueError::new_err(chain(&e))
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

/// A typed, labelled graph loaded from `nodes.tsv` and `edges.tsv`.
#[pyclass(module = "pygripnet")]
struct Graph {
    inner: HeteroGraph,
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn load(nodes: PathBuf, edges: PathBuf) -> PyResult<Self> {
        let (inner, _) = load_edge_list(&nodes, &edges).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn node_types(&self) -> Vec<String> {
        self.inner.type_names().to_vec()
    }

    #[getter]
    fn edge_labels(&self) -> Vec<String> {
        self.inner.label_names().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={}, types={}, labels={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.type_names().len(),
            self.inner.label_names().len()
        )
    }
}

/// A validated run configuration.
#[pyclass(name = "RunConfig", module = "pygripnet", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Parses a config file; its relative paths resolve against its directory.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let inner = harness::parse_config(&path).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (text, base_dir = PathBuf::from(".")))]
    fn from_json(text: &str, base_dir: PathBuf) -> PyResult<Self> {
        let inner = RunConfig::from_json_str(text, &base_dir).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn get_seed(&self) -> u64 {
        self.inner.training.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.training.seed = seed;
    }

    #[getter]
    fn get_epochs(&self) -> usize {
        self.inner.training.epochs
    }

    #[setter]
    fn set_epochs(&mut self, epochs: usize) {
        self.inner.training.epochs = epochs;
    }

    #[getter]
    fn get_output(&self) -> PathBuf {
        self.inner.output.clone()
    }

    #[setter]
    fn set_output(&mut self, out: PathBuf) {
        self.inner.output = out;
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.task.kind.as_str()
    }
}

/// A trained model together with the data it was trained on.
#[pyclass(module = "pygripnet")]
struct TrainedModel {
    config: RunConfig,
    prepared: Prepared,
    model: Model,
    history: Vec<EpochRecord>,
}

#[pymethods]
impl TrainedModel {
    /// `(epoch, loss, test_metric or None)` per epoch.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, Option<f64>)> {
        self.history.iter().map(|r| (r.epoch, r.loss, r.test_metric)).collect()
    }

    #[getter]
    fn categories(&self) -> Vec<String> {
        self.prepared.supergraph.category_names().to_vec()
    }

    /// Node ids of `category` in embedding row order.
    fn node_names(&self, category: &str) -> PyResult<Vec<String>> {
        let sg = self.prepared.message_graph();
        let c = sg
            .category_by_name(category)
            .ok_or_else(|| PyValueError::new_err(format!("unknown category `{category}`")))?;
        Ok(sg
            .supervertex(c)
            .nodes()
            .iter()
            .map(|&g| self.prepared.graph.node_name(g).to_string())
            .collect())
    }

    /// Embedding rows of `category` as nested lists.
    fn embeddings(&self, category: &str) -> PyResult<Vec<Vec<f64>>> {
        let c = self
            .prepared
            .message_graph()
            .category_by_name(category)
            .ok_or_else(|| PyValueError::new_err(format!("unknown category `{category}`")))?;
        let z = self.model.embeddings().map_err(value_err)?;
        let z = &z[c.0];
        Ok((0..z.rows()).map(|r| z.row(r).to_vec()).collect())
    }

    /// Test-split report as a dict.
    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = harness::evaluate(&self.prepared, &self.model).map_err(value_err)?;
        json_to_py(py, &report)
    }

    fn checkpoint_json(&self) -> String {
        harness::Checkpoint::new(&self.config, self.prepared.classes(), self.model.store()).to_json()
    }

    fn save_checkpoint(&self, path: PathBuf) -> PyResult<()> {
        harness::Checkpoint::new(&self.config, self.prepared.classes(), self.model.store())
            .save(&path)
            .map_err(|e| PyRuntimeError::new_err(chain(&e)))
    }
}

/// Validates the supergraph and returns the summary printed by `gripnet check`.
#[pyfunction]
fn check(config: &PyRunConfig) -> PyResult<String> {
    harness::cmd_check(&config.inner).map_err(value_err)
}

/// Trains in memory; nothing is written to disk.
#[pyfunction]
fn train(py: Python<'_>, config: &PyRunConfig) -> PyResult<TrainedModel> {
    let cfg = config.inner.clone();
    py.detach(move || {
        let prepared = harness::prepare(&cfg)?;
        let out = harness::train(&cfg, &prepared)?;
        Ok::<_, harness::HarnessError>(TrainedModel {
            config: cfg,
            prepared,
            model: out.model,
            history: out.history,
        })
    })
    .map_err(value_err)
}

/// Evaluates a checkpoint file and writes `report.json`; returns the report.
#[pyfunction]
fn evaluate_checkpoint<'py>(py: Python<'py>, config: &PyRunConfig, checkpoint: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = harness::cmd_eval(&config.inner, &checkpoint).map_err(value_err)?;
    json_to_py(py, &report)
}

/// Writes `embeddings_<category>.tsv` files and returns their paths.
#[pyfunction]
fn export(checkpoint: PathBuf, out: PathBuf) -> PyResult<Vec<PathBuf>> {
    harness::cmd_export(&checkpoint, &out).map_err(value_err)
}

/// `(auroc, auprc, ap50)` of `scores` against boolean `labels`.
#[pyfunction]
fn rank_metrics(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<(f64, f64, f64)> {
    let m = metrics::rank_metrics(&scores, &labels).map_err(value_err)?;
    Ok((m.auroc, m.auprc, m.ap50))
}

/// Micro/macro F1 report for integer class ids.
#[pyfunction]
fn f1_metrics<'py>(
    py: Python<'py>,
    predicted: Vec<usize>,
    truth: Vec<usize>,
    num_classes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let r = metrics::f1_metrics(&predicted, &truth, num_classes).map_err(value_err)?;
    json_to_py(py, &serde_json::to_value(r).expect("report serializes"))
}

/// Generates a planted-community dataset (`mode` is "lp" or "nc") and
/// returns the path of its config.json.
#[pyfunction]
#[pyo3(signature = (mode, out, seed = None))]
fn synthesize(mode: &str, out: PathBuf, seed: Option<u64>) -> PyResult<PathBuf> {
    let mut spec = match mode {
        "lp" => SyntheticSpec::default_lp(),
        "nc" => SyntheticSpec::default_nc(),
        other => return Err(PyValueError::new_err(format!("mode must be `lp` or `nc`, got `{other}`"))),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    harness::generate_synthetic(&spec, &out).map_err(value_err)?;
    Ok(out.join("config.json"))
}

#[pymodule]
fn pygripnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<TrainedModel>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(export, m)?)?;
    m.add_function(wrap_pyfunction!(rank_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(f1_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
