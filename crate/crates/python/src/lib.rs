//! Python bindings: model files, training, prediction, metrics and prep.

use std::path::PathBuf;

use cnn_ids::metrics::{self, ConfusionMatrix, MetricsReport};
use cnn_ids::model_io::{self, ModelMetadata};
use cnn_ids::nn::{softmax, ModelParams};
use cnn_ids::pipeline::{self, EncodingMeta, FeatureMatrix, LabeledDataset, PrepSchema};
use cnn_ids::trainer::{self, TrainConfig, TrainReport};
use cnn_ids::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString};

create_exception!(
    cnn_ids_py,
    ModelFormatError,
    PyValueError,
    "Malformed or corrupt model file."
);
create_exception!(
    cnn_ids_py,
    DivergenceError,
    PyRuntimeError,
    "Training produced a non-finite loss."
);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Format(_) => ModelFormatError::new_err(msg),
        Error::Divergence { .. } => DivergenceError::new_err(msg),
        Error::Io { source, .. } => PyIOError::new_err(format!("{msg}: {source}")),
        Error::Numeric(_) | Error::Internal(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for cnn_ids::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn toml_value(obj: &Bound<'_, PyAny>) -> PyResult<toml::Value> {
    // bool before int: Python bools are ints
    if obj.is_instance_of::<PyBool>() {
        Ok(toml::Value::Boolean(obj.extract()?))
    } else if obj.is_instance_of::<PyInt>() {
        Ok(toml::Value::Integer(obj.extract()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Ok(toml::Value::Float(obj.extract()?))
    } else if obj.is_instance_of::<PyString>() {
        Ok(toml::Value::String(obj.extract()?))
    } else if let Ok(list) = obj.cast::<PyList>() {
        list.iter()
            .map(|v| toml_value(&v))
            .collect::<PyResult<_>>()
            .map(toml::Value::Array)
    } else {
        Err(PyValueError::new_err(format!(
            "unsupported config value {obj}"
        )))
    }
}

fn config_from(config: Option<&Bound<'_, PyDict>>) -> PyResult<TrainConfig> {
    let Some(d) = config else {
        return Ok(TrainConfig::default());
    };
    let mut table = toml::Table::new();
    for (k, v) in d.iter() {
        table.insert(k.extract()?, toml_value(&v)?);
    }
    let text = toml::to_string(&table).map_err(|e| PyValueError::new_err(e.to_string()))?;
    TrainConfig::from_toml_str(&text).py_err()
}

fn schema_from(path: Option<PathBuf>) -> PyResult<PrepSchema> {
    path.map_or_else(
        || Ok(PrepSchema::default()),
        |p| PrepSchema::load(p).py_err(),
    )
}

fn matrix(rows: Vec<Vec<f32>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(&rows).py_err()
}

fn metrics_dict<'py>(py: Python<'py>, m: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("samples", m.samples)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("macro_precision", m.macro_precision)?;
    d.set_item("macro_recall", m.macro_recall)?;
    d.set_item("macro_f1", m.macro_f1)?;
    let per = PyList::empty(py);
    for c in &m.per_class {
        let e = PyDict::new(py);
        e.set_item("class", &c.class)?;
        e.set_item("support", c.support)?;
        e.set_item("precision", c.precision)?;
        e.set_item("recall", c.recall)?;
        e.set_item("f1", c.f1)?;
        e.set_item("flagged", c.precision_undefined || c.recall_undefined)?;
        per.append(e)?;
    }
    d.set_item("per_class", per)?;
    d.set_item("test_seconds", m.test_seconds)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &TrainReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let train_loss: Vec<f64> = r.epochs.iter().map(|e| e.train_loss).collect();
    let val_loss: Vec<Option<f64>> = r.epochs.iter().map(|e| e.val_loss).collect();
    d.set_item("train_loss", train_loss)?;
    d.set_item("val_loss", val_loss)?;
    d.set_item("total_seconds", r.total_seconds)?;
    d.set_item("adam_steps", r.adam_steps)?;
    d.set_item("train_rows", r.train_rows)?;
    d.set_item("validation_rows", r.validation_rows)?;
    Ok(d)
}

/// A trained network plus the metadata stored in its model file.
#[pyclass(module = "cnn_ids_py")]
struct Model {
    params: ModelParams,
    meta: ModelMetadata,
}

impl Model {
    fn encoding(&self) -> PyResult<&EncodingMeta> {
        self.meta
            .encoding
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model carries no encoding metadata"))
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (params, meta) = model_io::read_model(path).py_err()?;
        Ok(Self { params, meta })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model_io::write_model(&self.params, &self.meta, path).py_err()
    }

    /// The exact bytes `save` would write.
    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        model_io::encode_model(&self.params, &self.meta).py_err()
    }

    #[staticmethod]
    fn from_bytes(data: Vec<u8>) -> PyResult<Self> {
        let (params, meta) = model_io::decode_model(&data).py_err()?;
        Ok(Self { params, meta })
    }

    #[getter]
    fn feature_count(&self) -> usize {
        self.meta.feature_count
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    #[getter]
    fn label_names(&self) -> Vec<String> {
        self.meta.label_names.clone()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Layer extents after each conv and pool stage.
    #[getter]
    fn stage_lengths(&self) -> PyResult<Vec<usize>> {
        self.params.architecture().stage_lengths().py_err()
    }

    /// Class indices for already-encoded feature rows.
    fn predict(&self, py: Python<'_>, rows: Vec<Vec<f32>>) -> PyResult<Vec<usize>> {
        let m = matrix(rows)?;
        py.detach(|| metrics::predict(&self.params, &m)).py_err()
    }

    /// Softmax probabilities for already-encoded feature rows.
    fn predict_proba(&self, py: Python<'_>, rows: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f64>>> {
        let m = matrix(rows)?;
        let logits = py
            .detach(|| metrics::predict_logits(&self.params, &m))
            .py_err()?;
        logits
            .iter()
            .map(|z| softmax(z))
            .collect::<cnn_ids::Result<_>>()
            .py_err()
    }

    /// `(row_index, class_name, confidence)` for each row of a raw or
    /// cleaned CSV, encoded with the model's stored metadata.
    fn predict_csv(&self, py: Python<'_>, path: PathBuf) -> PyResult<Vec<(usize, String, f64)>> {
        let enc = self.encoding()?;
        let table = pipeline::load_csv(path).py_err()?;
        let (features, _) = enc.transform_features(&table).py_err()?;
        let logits = py
            .detach(|| metrics::predict_logits(&self.params, &features))
            .py_err()?;
        logits
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let k = metrics::argmax(z);
                let p = softmax(z).py_err()?;
                Ok((i, enc.label_names[k].clone(), p[k]))
            })
            .collect()
    }

    /// Metrics on a labelled CSV encoded with the model's stored metadata.
    fn evaluate_csv<'py>(&self, py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
        let enc = self.encoding()?;
        let table = pipeline::load_csv(path).py_err()?;
        let (ds, _) = enc.transform(&table).py_err()?;
        let m = py.detach(|| evaluate_dataset(&self.params, &ds)).py_err()?;
        metrics_dict(py, &m)
    }

    /// Metrics on encoded rows and integer labels.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        rows: Vec<Vec<f32>>,
        labels: Vec<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ds = dataset(rows, labels, Some(self.meta.label_names.clone()))?;
        let m = py.detach(|| evaluate_dataset(&self.params, &ds)).py_err()?;
        metrics_dict(py, &m)
    }

    fn __repr__(&self) -> String {
        let a = self.params.architecture();
        format!(
            "Model(features={}, classes={}, filters={:?}, dense={}, params={})",
            a.input_len,
            a.num_classes,
            a.conv_filters,
            a.dense_units,
            self.params.param_count()
        )
    }
}

fn evaluate_dataset(params: &ModelParams, ds: &LabeledDataset) -> cnn_ids::Result<MetricsReport> {
    let start = std::time::Instant::now();
    let pred = metrics::predict(params, &ds.features)?;
    let secs = start.elapsed().as_secs_f64();
    let cm = metrics::confusion(&ds.labels, &pred, ds.num_classes())?.with_labels(&ds.label_names);
    let mut m = metrics::compute_metrics(&cm)?;
    m.test_seconds = Some(secs);
    Ok(m)
}

fn dataset(
    rows: Vec<Vec<f32>>,
    labels: Vec<usize>,
    names: Option<Vec<String>>,
) -> PyResult<LabeledDataset> {
    let features = matrix(rows)?;
    if labels.len() != features.n_rows() {
        return Err(PyValueError::new_err(format!(
            "{} labels for {} rows",
            labels.len(),
            features.n_rows()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let label_names = names.unwrap_or_else(|| (0..k).map(|i| i.to_string()).collect());
    if label_names.len() < k {
        return Err(PyValueError::new_err(format!(
            "label {} out of range for {} label names",
            k - 1,
            label_names.len()
        )));
    }
    let feature_names = (0..features.n_cols()).map(|i| format!("f{i}")).collect();
    Ok(LabeledDataset {
        normalization_params: vec![pipeline::NormParam::IDENTITY; features.n_cols()],
        features,
        labels,
        label_names,
        feature_names,
    })
}

/// Trains on encoded rows; `config` keys match the training config file.
#[pyfunction]
#[pyo3(signature = (rows, labels, config=None, label_names=None))]
fn train<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f32>>,
    labels: Vec<usize>,
    config: Option<&Bound<'py, PyDict>>,
    label_names: Option<Vec<String>>,
) -> PyResult<(Model, Bound<'py, PyDict>)> {
    let cfg = config_from(config)?;
    let ds = dataset(rows, labels, label_names)?;
    let (params, report) = py.detach(|| trainer::train(&ds, &cfg)).py_err()?;
    let mut meta = ModelMetadata::for_params(&params);
    meta.label_names = ds.label_names.clone();
    meta.seed = Some(cfg.seed);
    meta.train_config = Some(cfg);
    Ok((Model { params, meta }, report_dict(py, &report)?))
}

/// Splits a prepared CSV, trains, and returns the model with held-out
/// metrics. The model carries its encoding, so `predict_csv` works on raw rows.
#[pyfunction]
#[pyo3(signature = (path, config=None, schema_path=None))]
fn train_csv<'py>(
    py: Python<'py>,
    path: PathBuf,
    config: Option<&Bound<'py, PyDict>>,
    schema_path: Option<PathBuf>,
) -> PyResult<(Model, Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let cfg = config_from(config)?;
    let schema = schema_from(schema_path)?;
    let table = pipeline::load_csv(path).py_err()?;
    let seed = cnn_ids::rng::derive_seed(cfg.seed, cnn_ids::rng::SPLIT, 0);
    let (params, meta, report, holdout) = py
        .detach(|| -> cnn_ids::Result<_> {
            let split = pipeline::prepare(&table, &schema, 1.0 - cfg.test_fraction, seed)?;
            let (params, report) = trainer::train(&split.train, &cfg)?;
            let holdout = evaluate_dataset(&params, &split.test)?;
            let mut meta = ModelMetadata::for_params(&params).with_encoding(split.meta);
            meta.seed = Some(cfg.seed);
            meta.train_config = Some(cfg.clone());
            Ok((params, meta, report, holdout))
        })
        .py_err()?;
    Ok((
        Model { params, meta },
        report_dict(py, &report)?,
        metrics_dict(py, &holdout)?,
    ))
}

/// Cleans a raw CSV to `output` and writes class statistics; returns the
/// clean counters.
#[pyfunction]
#[pyo3(signature = (input, output, stats_out, schema_path=None))]
fn prep<'py>(
    py: Python<'py>,
    input: PathBuf,
    output: PathBuf,
    stats_out: PathBuf,
    schema_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let schema = schema_from(schema_path)?;
    let report = py
        .detach(|| -> cnn_ids::Result<_> {
            let table = pipeline::load_csv(&input)?;
            let (cleaned, report) = pipeline::clean(&table, &schema)?;
            pipeline::write_csv(&cleaned, &output)?;
            let stats = pipeline::table_class_stats(&cleaned, &schema.label_column)?;
            pipeline::write_class_stats(&stats, &stats_out)?;
            Ok(report)
        })
        .py_err()?;
    let d = PyDict::new(py);
    d.set_item("rows_in", report.rows_in)?;
    d.set_item("rows_with_missing", report.rows_with_missing)?;
    d.set_item("duplicate_rows", report.duplicate_rows)?;
    d.set_item("rows_out", report.rows_out)?;
    d.set_item("dropped_columns", report.dropped_columns)?;
    Ok(d)
}

/// `counts[true][predicted]`.
#[pyfunction]
fn confusion_matrix(
    y_true: Vec<usize>,
    y_pred: Vec<usize>,
    num_classes: usize,
) -> PyResult<Vec<Vec<u64>>> {
    let cm = metrics::confusion(&y_true, &y_pred, num_classes).py_err()?;
    Ok((0..num_classes)
        .map(|i| (0..num_classes).map(|j| cm.get(i, j)).collect())
        .collect())
}

#[pyfunction]
#[pyo3(signature = (counts, label_names=None))]
fn compute_metrics<'py>(
    py: Python<'py>,
    counts: Vec<Vec<u64>>,
    label_names: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cm = ConfusionMatrix::from_rows(&counts).py_err()?;
    if let Some(n) = label_names {
        if n.len() != cm.num_classes() {
            return Err(PyValueError::new_err(
                "label_names length differs from matrix size",
            ));
        }
        cm = cm.with_labels(&n);
    }
    metrics_dict(py, &metrics::compute_metrics(&cm).py_err()?)
}

/// Linearly separable blobs: `(rows, labels)`.
#[pyfunction]
fn separable_dataset(
    rows: usize,
    features: usize,
    classes: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f32>>, Vec<usize>)> {
    if classes < 2 || features == 0 {
        return Err(PyValueError::new_err(
            "need at least 2 classes and 1 feature",
        ));
    }
    let ds = cnn_ids::synthetic::separable_dataset(rows, features, classes, seed);
    Ok((ds.features.rows().map(<[f32]>::to_vec).collect(), ds.labels))
}

#[pymodule]
fn cnn_ids_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(train_csv, m)?)?;
    m.add_function(wrap_pyfunction!(prep, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(separable_dataset, m)?)?;
    m.add("ModelFormatError", m.py().get_type::<ModelFormatError>())?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    Ok(())
}
