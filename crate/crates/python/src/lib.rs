//! Python bindings. Import as `ase_fd`.

use std::path::PathBuf;

use ase_fd::ase::{build_config, train, AseConfig, AseModel, TrainSpec};
use ase_fd::classify::ClassifierKind;
use ase_fd::cost::{count_mflops, CostModel};
use ase_fd::eval::{metrics, run_loso, ConfusionMatrix, EvalOptions, FrontEnd};
use ase_fd::features::{feature_names, frame_features};
use ase_fd::ingest::{load_manifest, synth_dataset, Axis, DatasetManifest};
use ase_fd::preprocess::{decimate, denormalize, frame_pair, Frame, WindowSpec};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(ase_fd, AseFdError, PyException, "Raised for any pipeline failure; `args[1]` is the error kind.");

fn err(e: ase_fd::Error) -> PyErr {
    AseFdError::new_err((e.to_string(), e.kind()))
}

fn parse<T: std::str::FromStr<Err = ase_fd::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A set of labeled trials.
#[pyclass(name = "Dataset", module = "ase_fd", frozen)]
struct PyDataset(DatasetManifest);

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.0.trials.len()
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.dataset_name.as_str()
    }

    #[getter]
    fn rate_hz(&self) -> Option<f64> {
        self.0.rate_hz()
    }

    fn subjects(&self) -> Vec<String> {
        self.0.subjects()
    }

    /// `(subject_id, activity_code, label)` per trial.
    fn index(&self) -> Vec<(String, String, &'static str)> {
        self.0
            .trials
            .iter()
            .map(|t| (t.subject_id.clone(), t.activity_code.clone(), t.label.as_str()))
            .collect()
    }

    /// Raw samples of trial `i` as `[[ax, ay, az], ...]` in g.
    fn samples(&self, i: usize) -> PyResult<Vec<[f64; 3]>> {
        let t = self.trial(i)?;
        Ok(t.samples.iter().map(|s| [s.ax, s.ay, s.az]).collect())
    }

    /// Normalized (low-resolution, high-resolution) frames of trial `i`.
    fn frame_pair(&self, i: usize, alpha: u32) -> PyResult<(PyFrame, PyFrame)> {
        let t = self.trial(i)?;
        let spec = WindowSpec::new(self.0.window_backward_s, self.0.window_forward_s).map_err(err)?;
        let (lr, hr) = frame_pair(t, &spec, alpha).map_err(err)?;
        Ok((PyFrame(lr), PyFrame(hr)))
    }

    #[pyo3(signature = (alpha, classifier = "svm", front_end = "original", seed = 0, epochs = 300, patience = 20, l2 = 0.0, dropout = 0.0, jobs = 1))]
    #[allow(clippy::too_many_arguments)]
    /// Leave-one-subject-out evaluation; returns the report as a dict.
    fn loso<'py>(
        &self,
        py: Python<'py>,
        alpha: u32,
        classifier: &str,
        front_end: &str,
        seed: u64,
        epochs: usize,
        patience: usize,
        l2: f64,
        dropout: f64,
        jobs: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kind: ClassifierKind = parse(classifier)?;
        let fe: FrontEnd = parse(front_end)?;
        let opts = EvalOptions {
            train: TrainSpec {
                max_epochs: epochs,
                patience,
                seed,
                ..TrainSpec::default()
            },
            l2_weight: l2,
            dropout_p: dropout,
            jobs,
            ..EvalOptions::default()
        };
        let report = py.detach(|| run_loso(&self.0, alpha, kind, fe, &opts)).map_err(err)?;
        json_to_py(py, &report)
    }
}

impl PyDataset {
    fn trial(&self, i: usize) -> PyResult<&ase_fd::ingest::Trial> {
        self.0
            .trials
            .get(i)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("trial {i} out of range")))
    }
}

/// Tri-axial frame, axis-major.
#[pyclass(name = "Frame", module = "ase_fd", frozen, from_py_object)]
#[derive(Clone)]
struct PyFrame(Frame);

#[pymethods]
impl PyFrame {
    #[new]
    #[pyo3(signature = (values, source_rate_hz))]
    fn new(values: Vec<f64>, source_rate_hz: f64) -> PyResult<Self> {
        if !values.len().is_multiple_of(3) {
            return Err(err(ase_fd::Error::InvalidArgument(format!(
                "{} values do not split into three axes",
                values.len()
            ))));
        }
        Frame::new(values.len() / 3, values, source_rate_hz).map(PyFrame).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Frame::load(&path).map(PyFrame).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(err)
    }

    #[getter]
    fn per_axis_len(&self) -> usize {
        self.0.per_axis_len()
    }

    #[getter]
    fn alpha(&self) -> u32 {
        self.0.alpha()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn source_rate_hz(&self) -> f64 {
        self.0.source_rate_hz()
    }

    /// `(min, max)` used for normalization, or None.
    #[getter]
    fn norm_params(&self) -> Option<(f64, f64)> {
        self.0.norm_params().map(|p| (p.min, p.max))
    }

    fn axis(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= 3 {
            return Err(pyo3::exceptions::PyIndexError::new_err("axis must be 0, 1 or 2"));
        }
        Ok(self.0.axis(i).to_vec())
    }

    fn resampled(&self, per_axis_len: usize) -> PyResult<Self> {
        self.0.resampled(per_axis_len).map(PyFrame).map_err(err)
    }

    fn denormalize(&self) -> PyResult<Self> {
        denormalize(&self.0).map(PyFrame).map_err(err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Frame(3x{}, normalized={})",
            self.0.per_axis_len(),
            self.0.is_normalized()
        )
    }
}

/// Layer sizes of an enhancement model.
#[pyclass(name = "AseConfig", module = "ase_fd", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAseConfig(AseConfig);

#[pymethods]
impl PyAseConfig {
    #[getter]
    fn alpha(&self) -> u32 {
        self.0.alpha
    }

    #[getter]
    fn in_per_axis(&self) -> usize {
        self.0.in_per_axis
    }

    #[getter]
    fn conv_channels(&self) -> usize {
        self.0.conv_channels
    }

    #[getter]
    fn encoder_dense_widths(&self) -> Vec<usize> {
        self.0.encoder_dense_widths.clone()
    }

    #[getter]
    fn out_per_axis(&self) -> usize {
        self.0.out_per_axis
    }

    fn mflops(&self) -> f64 {
        count_mflops(&self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "AseConfig(alpha={}, channels={}, dense={:?})",
            self.0.alpha, self.0.conv_channels, self.0.encoder_dense_widths
        )
    }
}

#[pyfunction(name = "build_config")]
#[pyo3(signature = (alpha, l2 = 0.0, dropout = 0.0))]
fn py_build_config(alpha: u32, l2: f64, dropout: f64) -> PyResult<PyAseConfig> {
    build_config(alpha, l2, dropout).map(PyAseConfig).map_err(err)
}

#[pyclass(name = "AseModel", module = "ase_fd", frozen)]
struct PyAseModel(AseModel);

#[pymethods]
impl PyAseModel {
    /// Freshly initialized model.
    #[new]
    #[pyo3(signature = (config, seed = 0))]
    fn new(config: &PyAseConfig, seed: u64) -> PyResult<Self> {
        AseModel::new(config.0.clone(), seed).map(PyAseModel).map_err(err)
    }

    /// Trains on `(lr, hr)` frame pairs. Returns `(model, report_dict)`.
    #[staticmethod]
    #[pyo3(signature = (pairs, config, epochs = 300, batch_size = 32, lr = 1e-3, patience = 20, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        py: Python<'py>,
        pairs: Vec<(PyFrame, PyFrame)>,
        config: &PyAseConfig,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        patience: usize,
        seed: u64,
    ) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let pairs: Vec<(Frame, Frame)> = pairs.into_iter().map(|(a, b)| (a.0, b.0)).collect();
        let spec = TrainSpec {
            max_epochs: epochs,
            batch_size,
            step_size: lr,
            patience,
            seed,
        };
        let config = config.0.clone();
        let trained = py.detach(|| train(&pairs, &config, &spec)).map_err(err)?;
        let report = json_to_py(py, &trained.report)?;
        Ok((PyAseModel(trained.model), report))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        AseModel::load(&path).map(PyAseModel).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(err)
    }

    #[getter]
    fn config(&self) -> PyAseConfig {
        PyAseConfig(self.0.config().clone())
    }

    fn param_count(&self) -> usize {
        self.0.params().param_count()
    }

    /// Maps a normalized low-resolution frame to a 3x256 frame.
    fn enhance(&self, frame: &PyFrame) -> PyResult<PyFrame> {
        self.0.enhance(&frame.0).map(PyFrame).map_err(err)
    }
}

#[pyfunction(name = "synth_dataset")]
#[pyo3(signature = (subjects = 6, trials_per_subject = 20, seed = 0, rate_hz = 200.0, duration_s = 6.0))]
fn py_synth_dataset(
    subjects: usize,
    trials_per_subject: usize,
    seed: u64,
    rate_hz: f64,
    duration_s: f64,
) -> PyResult<PyDataset> {
    synth_dataset(subjects, trials_per_subject, seed, rate_hz, duration_s)
        .map(PyDataset)
        .map_err(err)
}

#[pyfunction(name = "load_manifest")]
fn py_load_manifest(path: PathBuf) -> PyResult<PyDataset> {
    load_manifest(&path).map(PyDataset).map_err(err)
}

/// Keeps every `2**alpha`-th value, starting with the first.
#[pyfunction(name = "decimate")]
fn py_decimate(values: Vec<f64>, alpha: u32) -> PyResult<Vec<f64>> {
    decimate(&values, alpha).map_err(err)
}

/// The 54 features of a frame in g (denormalize first).
#[pyfunction(name = "features")]
#[pyo3(signature = (frame, vertical_axis = "y"))]
fn py_features(frame: &PyFrame, vertical_axis: &str) -> PyResult<Vec<f64>> {
    let axis: Axis = parse(vertical_axis)?;
    frame_features(&frame.0, axis).map(|f| f.as_slice().to_vec()).map_err(err)
}

#[pyfunction(name = "feature_names")]
fn py_feature_names() -> Vec<String> {
    feature_names()
}

/// Accuracy, sensitivity, specificity and precision; undefined ratios are None.
#[pyfunction(name = "metrics")]
fn py_metrics<'py>(py: Python<'py>, tp: u64, tn: u64, fp: u64, fn_: u64) -> PyResult<Bound<'py, PyDict>> {
    let cm = ConfusionMatrix {
        tp,
        tn,
        fp,
        fn_,
    };
    let m = metrics(&cm);
    let d = PyDict::new(py);
    d.set_item("acc", m.acc)?;
    d.set_item("sen", m.sen)?;
    d.set_item("spe", m.spe)?;
    d.set_item("pre", m.pre)?;
    Ok(d)
}

/// Power (mA), battery life (h, None when unbounded) and response time (s).
#[pyfunction(name = "cost")]
fn py_cost<'py>(py: Python<'py>, mflops: f64) -> PyResult<Bound<'py, PyDict>> {
    if !(mflops >= 0.0 && mflops.is_finite()) {
        return Err(err(ase_fd::Error::InvalidArgument(format!("mflops {mflops} must be non-negative"))));
    }
    let e = CostModel::default().estimate(mflops);
    let d = PyDict::new(py);
    d.set_item("power_ma", e.power_ma)?;
    d.set_item("battery_life_h", e.battery_life_h)?;
    d.set_item("response_time_s", e.response_time_s)?;
    Ok(d)
}

#[pymodule(name = "ase_fd")]
fn ase_fd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AseFdError", m.py().get_type::<AseFdError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyAseConfig>()?;
    m.add_class::<PyAseModel>()?;
    m.add_function(wrap_pyfunction!(py_synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(py_load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(py_decimate, m)?)?;
    m.add_function(wrap_pyfunction!(py_build_config, m)?)?;
    m.add_function(wrap_pyfunction!(py_features, m)?)?;
    m.add_function(wrap_pyfunction!(py_feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(py_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(py_cost, m)?)?;
    Ok(())
}
