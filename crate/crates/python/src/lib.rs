//! Python bindings: corpora, experiment configuration, training, prediction, and scoring.
//!
//! Structured results (reports, histories, prediction records) cross the boundary as
//! plain dicts and lists decoded from their JSON form.

use std::path::PathBuf;

use colannot_core::analysis::extract_column_embeddings;
use colannot_core::checkpoint::ModelBundle;
use colannot_core::corpus::{
    generate_bigram_corpus, generate_synthetic_corpus, load_corpus, parse_corpus, save_corpus, split_corpus,
    LabelMode, SyntheticSpec,
};
use colannot_core::metrics::evaluate;
use colannot_core::pipeline::{evaluate_bundle, predict_corpus, run_experiment, ExperimentConfig};
use colannot_core::serializer::serialize_table;
use colannot_core::tokenizer::build_token_vocabulary;
use colannot_core::annotator::TaskKind;
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: colannot_core::Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn task(name: &str) -> PyResult<TaskKind> {
    name.parse().map_err(to_py)
}

/// Tables with their type and relation annotations.
#[pyclass(name = "Corpus", module = "colannot", skip_from_py_object)]
#[derive(Clone)]
struct PyCorpus {
    inner: colannot_core::corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Reads a JSONL corpus; `multiclass=True` rejects items with several labels.
    #[staticmethod]
    #[pyo3(signature = (path, multiclass = false))]
    fn load(path: PathBuf, multiclass: bool) -> PyResult<Self> {
        let mode = if multiclass { LabelMode::Multiclass } else { LabelMode::Multilabel };
        Ok(PyCorpus { inner: load_corpus(&path, mode).map_err(to_py)? })
    }

    /// Parses JSONL text, one table per line.
    #[staticmethod]
    #[pyo3(signature = (text, multiclass = false))]
    fn from_jsonl(text: &str, multiclass: bool) -> PyResult<Self> {
        let mode = if multiclass { LabelMode::Multiclass } else { LabelMode::Multilabel };
        let inner = parse_corpus(text.as_bytes(), "<string>", mode).map_err(to_py)?;
        Ok(PyCorpus { inner })
    }

    /// The context benchmark: ambiguous columns resolvable only from their table.
    #[staticmethod]
    #[pyo3(signature = (num_tables, seed = 0))]
    fn synthetic(num_tables: usize, seed: u64) -> PyResult<Self> {
        let spec = SyntheticSpec::context_benchmark(num_tables);
        Ok(PyCorpus { inner: generate_synthetic_corpus(&spec, seed).map_err(to_py)? })
    }

    /// Tables whose cells follow a fixed token cycle, so every next token is determined.
    #[staticmethod]
    #[pyo3(signature = (num_tables, cycle_len = 12, cells = 8, seed = 0))]
    fn bigram(num_tables: usize, cycle_len: usize, cells: usize, seed: u64) -> PyResult<Self> {
        Ok(PyCorpus { inner: generate_bigram_corpus(num_tables, cycle_len, cells, seed).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_corpus(&self.inner, &path).map_err(to_py)
    }

    /// Splits by table into (train, valid, test).
    #[pyo3(signature = (train = 0.8, valid = 0.1, test = 0.1, seed = 0))]
    fn split(&self, train: f64, valid: f64, test: f64, seed: u64) -> PyResult<(Self, Self, Self)> {
        let s = split_corpus(&self.inner, (train, valid, test), seed).map_err(to_py)?;
        Ok((PyCorpus { inner: s.train }, PyCorpus { inner: s.valid }, PyCorpus { inner: s.test }))
    }

    fn table_ids(&self) -> Vec<String> {
        self.inner.tables().iter().map(|t| t.id.clone()).collect()
    }

    /// Cell values of one table, column by column.
    fn columns(&self, table_id: &str) -> PyResult<Vec<Vec<String>>> {
        let table = self
            .inner
            .table(table_id)
            .ok_or_else(|| PyKeyError::new_err(table_id.to_string()))?;
        Ok(table.columns.iter().map(|c| c.values.clone()).collect())
    }

    fn type_labels(&self) -> Vec<String> {
        self.inner.type_vocab().names().to_vec()
    }

    fn relation_labels(&self) -> Vec<String> {
        self.inner.relation_vocab().names().to_vec()
    }

    fn num_type_annotations(&self) -> usize {
        self.inner.type_annotations().len()
    }

    fn num_relation_annotations(&self) -> usize {
        self.inner.relation_annotations().len()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(tables={}, type_labels={}, relation_labels={})",
            self.inner.len(),
            self.inner.type_vocab().len(),
            self.inner.relation_vocab().len()
        )
    }
}

/// Experiment configuration; every field has a default and can be set from TOML.
#[pyclass(name = "Config", module = "colannot", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults overridden by the keys in `toml`.
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        let inner = ExperimentConfig::from_toml_str(toml).map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(PyConfig { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.inner)
    }

    /// Renders `table_id` the way the table-wise encoder sees it.
    fn render_table(&self, corpus: &PyCorpus, table_id: &str) -> PyResult<String> {
        let c = &corpus.inner;
        let table = c.table(table_id).ok_or_else(|| PyKeyError::new_err(table_id.to_string()))?;
        let vocab = build_token_vocabulary(c, self.inner.vocab_max_size, self.inner.vocab_min_freq).map_err(to_py)?;
        let seq = serialize_table(table, &self.inner.serializer_config(), &vocab).map_err(to_py)?;
        Ok(seq.render(&vocab))
    }

    fn __repr__(&self) -> String {
        format!("Config({:?})", self.inner.to_toml())
    }
}

/// A trained encoder with its type and relation heads.
#[pyclass(name = "Model", module = "colannot")]
struct PyModel {
    inner: ModelBundle,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: ModelBundle::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    /// One record per annotated column (`task="type"`) or column pair (`task="relation"`).
    #[pyo3(signature = (corpus, task = "type", threshold = 0.5))]
    fn predict<'py>(&self, py: Python<'py>, corpus: &PyCorpus, task: &str, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
        let kind = self::task(task)?;
        let records = py
            .detach(|| predict_corpus(&self.inner, &corpus.inner, kind, threshold))
            .map_err(to_py)?;
        to_object(py, &records)
    }

    /// Micro/macro/weighted scores and per-class results on `corpus`.
    #[pyo3(signature = (corpus, task = "type", threshold = 0.5))]
    fn evaluate<'py>(&self, py: Python<'py>, corpus: &PyCorpus, task: &str, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
        let kind = self::task(task)?;
        let report = py
            .detach(|| evaluate_bundle(&self.inner, &corpus.inner, kind, threshold))
            .map_err(to_py)?;
        to_object(py, &report)
    }

    /// Contextualized embeddings of every column of `table_id`.
    fn embed(&self, corpus: &PyCorpus, table_id: &str) -> PyResult<Vec<Vec<f64>>> {
        let table = corpus
            .inner
            .table(table_id)
            .ok_or_else(|| PyKeyError::new_err(table_id.to_string()))?;
        let e = extract_column_embeddings(&self.inner.model, table, &self.inner.input).map_err(to_py)?;
        Ok(e.into_iter().map(|v| v.to_vec()).collect())
    }

    fn type_labels(&self) -> Vec<String> {
        self.inner.type_labels.names().to_vec()
    }

    fn relation_labels(&self) -> Vec<String> {
        self.inner.relation_labels.names().to_vec()
    }
}

/// Result of [`train`]: the selected model, its training history, and test reports.
#[pyclass(name = "TrainResult", module = "colannot")]
struct PyTrainResult {
    #[pyo3(get)]
    model: Py<PyModel>,
    #[pyo3(get)]
    history: Py<PyAny>,
    #[pyo3(get)]
    best_epoch: usize,
    #[pyo3(get)]
    test_reports: Py<PyAny>,
}

/// Splits `corpus` by the configured fractions, trains the configured tasks jointly,
/// and evaluates on the test split.
#[pyfunction]
#[pyo3(signature = (corpus, config = None))]
fn train(py: Python<'_>, corpus: &PyCorpus, config: Option<&PyConfig>) -> PyResult<PyTrainResult> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    cfg.validate().map_err(to_py)?;
    let run = py
        .detach(|| {
            let splits = split_corpus(&corpus.inner, cfg.fractions(), cfg.seed)?;
            run_experiment(&splits, &cfg, None, &mut ())
        })
        .map_err(to_py)?;
    let reports: serde_json::Map<String, serde_json::Value> = run
        .test_reports
        .iter()
        .map(|(t, r)| Ok((t.name().to_string(), serde_json::to_value(r)?)))
        .collect::<Result<_, serde_json::Error>>()
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyTrainResult {
        history: to_object(py, &run.history.records)?.unbind(),
        best_epoch: run.history.best_epoch,
        test_reports: to_object(py, &reports)?.unbind(),
        model: Py::new(py, PyModel { inner: run.bundle })?,
    })
}

/// Scores label-id predictions against gold label ids (one list per item).
#[pyfunction]
fn score<'py>(py: Python<'py>, predicted: Vec<Vec<usize>>, gold: Vec<Vec<usize>>) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &evaluate(&predicted, &gold).map_err(to_py)?)
}

#[pymodule(name = "colannot")]
pub fn colannot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
