//! Python module `tcn_nids`.
//!
//! Batches cross the boundary as nested lists: `x[b][t]` for single-channel
//! sequences, labels as integer lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tcn_nids::cli::{cmd_fixture, cmd_preprocess, DataSource};
use tcn_nids::eval::{classification_report as report, render_report, ReportFormat};
use tcn_nids::nn::{load_model, receptive_field, save_model, ArchConfig, BuildConfig, ModelKind};
use tcn_nids::numerics::{Rng, Tensor};
use tcn_nids::optim::{evaluate, train, TrainConfig};
use tcn_nids::pipeline::{read_split, EncodedMatrix, FixtureConfig, Partition, PipelineConfig};

fn py_err(e: tcn_nids::Error) -> PyErr {
    match e.root() {
        tcn_nids::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn batch(x: &[Vec<f64>], steps: usize) -> PyResult<Tensor> {
    if let Some(row) = x.iter().find(|r| r.len() != steps) {
        return Err(PyValueError::new_err(format!(
            "every row needs {steps} values, found one with {}",
            row.len()
        )));
    }
    Tensor::new(vec![x.len(), steps, 1], x.concat()).map_err(py_err)
}

fn partition(x: &[Vec<f64>], y: &[usize], steps: usize) -> PyResult<Partition> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err(format!("{} rows but {} labels", x.len(), y.len())));
    }
    batch(x, steps)?;
    Partition::new(x.len(), steps, x.concat(), y.to_vec(), (0..x.len()).collect()).map_err(py_err)
}

/// TCN or 1D-CNN classifier over single-channel sequences.
#[pyclass(name = "Model", module = "tcn_nids")]
struct PyModel {
    inner: tcn_nids::nn::Model,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (
        input_length,
        num_classes = 15,
        kind = "tcn",
        channels = 64,
        kernel_size = 3,
        dilations = vec![1, 2, 4],
        head_units = 128,
        block_dropout = 0.1,
        head_dropout = 0.3,
        seed = 0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_length: usize,
        num_classes: usize,
        kind: &str,
        channels: usize,
        kernel_size: usize,
        dilations: Vec<usize>,
        head_units: usize,
        block_dropout: f64,
        head_dropout: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let kind: ModelKind = kind.parse().map_err(py_err)?;
        let arch = ArchConfig {
            input_length,
            input_channels: 1,
            num_classes,
            channels,
            kernel_size,
            dilations,
            block_dropout,
            head_units,
            head_dropout,
        };
        let inner = tcn_nids::nn::Model::from_build(BuildConfig { kind, arch }, seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_model(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn input_length(&self) -> usize {
        self.inner.spec().input_length
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn receptive_field(&self) -> usize {
        receptive_field(self.inner.spec())
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Trains in place and returns one dict per epoch. Validation defaults to
    /// the training data.
    #[pyo3(signature = (x, y, val_x = None, val_y = None, epochs = 5, learning_rate = 1e-3, batch_size = 32, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
        val_x: Option<Vec<Vec<f64>>>,
        val_y: Option<Vec<usize>>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let steps = self.input_length();
        let tr = partition(&x, &y, steps)?;
        let va = match (val_x, val_y) {
            (Some(vx), Some(vy)) => partition(&vx, &vy, steps)?,
            (None, None) => tr.clone(),
            _ => return Err(PyValueError::new_err("give both val_x and val_y, or neither")),
        };
        let config = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            shuffle: true,
        };
        let model = &mut self.inner;
        let logs = py
            .detach(|| train(model, &tr, &va, &config, &mut Rng::new(seed)))
            .map_err(py_err)?;
        logs.into_iter()
            .map(|l| {
                let d = PyDict::new(py);
                d.set_item("epoch", l.epoch)?;
                d.set_item("train_loss", l.train_loss)?;
                d.set_item("train_accuracy", l.train_accuracy)?;
                d.set_item("val_loss", l.val_loss)?;
                d.set_item("val_accuracy", l.val_accuracy)?;
                d.set_item("seconds", l.seconds)?;
                Ok(d)
            })
            .collect()
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let probs = self.inner.predict_proba(&batch(&x, self.input_length())?).map_err(py_err)?;
        Ok(probs.data().chunks(self.num_classes()).map(<[f64]>::to_vec).collect())
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.inner.predict(&batch(&x, self.input_length())?).map_err(py_err)
    }

    /// Inference-mode `(loss, accuracy)`.
    fn evaluate(&self, x: Vec<Vec<f64>>, y: Vec<usize>) -> PyResult<(f64, f64)> {
        let e = evaluate(&self.inner, &partition(&x, &y, self.input_length())?).map_err(py_err)?;
        Ok((e.loss, e.accuracy))
    }

    fn __repr__(&self) -> String {
        let kind = self.inner.build_config().map_or("custom", |b| b.kind.as_str());
        format!(
            "Model(kind={kind}, input_length={}, num_classes={}, parameters={})",
            self.input_length(),
            self.num_classes(),
            self.parameter_count()
        )
    }
}

/// Writes `fixture.csv` and `fixture_labels.csv`; returns the CSV path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, per_class = 300, classes = 15, numeric_features = 32, categorical_features = 4, separation = 4.0))]
fn write_fixture(
    out_dir: PathBuf,
    seed: u64,
    per_class: usize,
    classes: usize,
    numeric_features: usize,
    categorical_features: usize,
    separation: f64,
) -> PyResult<PathBuf> {
    let cfg = FixtureConfig {
        classes,
        per_class,
        numeric_features,
        categorical_features,
        separation,
        ..Default::default()
    };
    Ok(cmd_fixture(&cfg, seed, &out_dir).map_err(py_err)?.csv_path)
}

/// Runs the preparation pipeline on a CSV file and returns the split
/// directory it wrote.
#[pyfunction]
#[pyo3(signature = (data, out_dir, seed, fraction = 0.25, top_k = None, label_column = "Attack_type"))]
fn preprocess(
    py: Python<'_>,
    data: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    fraction: f64,
    top_k: Option<usize>,
    label_column: &str,
) -> PyResult<PathBuf> {
    let config = PipelineConfig {
        fraction,
        top_k,
        label_column: label_column.to_string(),
        ..Default::default()
    };
    let out = py
        .detach(|| cmd_preprocess(&DataSource::Csv(data), &config, seed, &out_dir))
        .map_err(py_err)?;
    Ok(out.dir)
}

/// `{partition: (x, y)}` plus `feature_names` and `classes`.
#[pyfunction]
fn load_split<'py>(py: Python<'py>, dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let (split, sidecar) = read_split(&dir).map_err(py_err)?;
    let d = PyDict::new(py);
    for (name, p) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let x: Vec<Vec<f64>> = (0..p.rows).map(|r| p.row(r).to_vec()).collect();
        d.set_item(name, (x, p.labels.clone()))?;
    }
    d.set_item("feature_names", split.feature_names)?;
    d.set_item("classes", sidecar.classes.names().to_vec())?;
    Ok(d)
}

/// Chi-squared statistic per feature, best first.
#[pyfunction]
#[pyo3(signature = (x, y, names = None))]
fn chi2_rank(x: Vec<Vec<f64>>, y: Vec<usize>, names: Option<Vec<String>>) -> PyResult<Vec<(String, f64)>> {
    let cols = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let names = names.unwrap_or_else(|| (0..cols).map(|j| format!("f{j}")).collect());
    let m = EncodedMatrix::new(names, x.len(), x.concat()).map_err(py_err)?;
    let ranking = tcn_nids::pipeline::chi2_rank(&m, &y).map_err(py_err)?;
    Ok(ranking.entries.into_iter().map(|e| (e.feature, e.statistic)).collect())
}

/// Per-class precision, recall and F1 with averages, rendered as `text`,
/// `json` or `csv`.
#[pyfunction]
#[pyo3(signature = (y_true, y_pred, class_names = None, format = "text"))]
fn classification_report(
    y_true: Vec<usize>,
    y_pred: Vec<usize>,
    class_names: Option<Vec<String>>,
    format: &str,
) -> PyResult<String> {
    let names = class_names.unwrap_or_else(|| {
        let k = y_true.iter().chain(&y_pred).max().map_or(0, |m| m + 1);
        (0..k).map(|c| c.to_string()).collect()
    });
    let format: ReportFormat = format.parse().map_err(py_err)?;
    let r = report(&y_true, &y_pred, &names).map_err(py_err)?;
    let bytes = render_report(&r, format).map_err(py_err)?;
    String::from_utf8(bytes).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn derive_seed(seed: u64, stage: &str) -> u64 {
    tcn_nids::numerics::derive_seed(seed, stage)
}

#[pymodule]
#[pyo3(name = "tcn_nids")]
fn tcn_nids_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(write_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(load_split, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_rank, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
