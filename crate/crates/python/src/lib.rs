//! Python bindings: clips, synthetic scenes, trajectories, descriptors,
//! Fisher-vector codebooks, SVMs and end-to-end runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use trailblaze::classify::{self, LabeledVideo};
use trailblaze::encoding::{self, FisherCodebook};
use trailblaze::media::{self, SceneSpec};
use trailblaze::pipeline::{self, DatasetSpec, PipelineConfig};
use trailblaze::roi::detect_rois;
use trailblaze::shape;
use trailblaze::stereo;
use trailblaze::tracking::{self, full_frame_rois, Algorithm};

fn py_err(e: trailblaze::Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for trailblaze::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A sequence of same-sized 8-bit frames from one camera.
#[pyclass(name = "Clip", module = "trailblaze", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PyClip(media::Clip);

#[pymethods]
impl PyClip {
    /// Loads every PGM/PPM file of a directory in name order.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        media::load_clip(&path).py().map(PyClip)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        media::write_clip(&self.0, &path).py()
    }

    #[getter]
    fn clip_id(&self) -> String {
        self.0.clip_id.clone()
    }

    #[getter]
    fn camera(&self) -> String {
        self.0.camera.to_string()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.frames[0].channels
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Raw row-major bytes of frame `index`.
    fn frame(&self, index: usize) -> PyResult<Vec<u8>> {
        self.0.frames.get(index).map(|f| f.data.clone()).ok_or_else(|| PyValueError::new_err(format!("frame {index} out of range")))
    }

    fn __repr__(&self) -> String {
        format!("Clip(id={:?}, camera={}, frames={}, size={}x{})", self.0.clip_id, self.0.camera, self.0.len(), self.0.width(), self.0.height())
    }
}

/// Positions of one tracked point over `length + 1` consecutive frames.
#[pyclass(name = "Trajectory", module = "trailblaze", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PyTrajectory(tracking::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[new]
    #[pyo3(signature = (points, start_frame=0, clip_id="clip".to_string(), camera="left".to_string()))]
    fn new(points: Vec<Vec<f64>>, start_frame: usize, clip_id: String, camera: String) -> PyResult<Self> {
        let camera = camera.parse().py()?;
        tracking::Trajectory::new(clip_id, camera, start_frame, points).py().map(PyTrajectory)
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points.clone()
    }

    #[getter]
    fn start_frame(&self) -> usize {
        self.0.start_frame
    }

    #[getter]
    fn clip_id(&self) -> String {
        self.0.clip_id.clone()
    }

    #[getter]
    fn camera(&self) -> String {
        self.0.camera.to_string()
    }

    /// Number of steps `l`.
    #[getter]
    fn length(&self) -> usize {
        self.0.length()
    }

    /// Coordinates per point: 2, or 3 with disparity.
    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(start={}, length={}, dim={})", self.0.start_frame, self.0.length(), self.0.dim())
    }
}

/// Diagonal Gaussian mixture used to build Fisher vectors.
#[pyclass(name = "Codebook", module = "trailblaze", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PyCodebook(FisherCodebook);

#[pymethods]
impl PyCodebook {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> PyResult<Self> {
        FisherCodebook::new(weights, means, variances).py().map(PyCodebook)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.0.means.clone()
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        self.0.variances.clone()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    /// Power- and L2-normalized Fisher vector of a descriptor set.
    fn fisher_vector(&self, descriptors: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        encoding::fisher_vector(&descriptors, &self.0).py()
    }

    /// Fisher vector before normalization.
    fn fisher_vector_raw(&self, descriptors: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        encoding::fisher_vector_raw(&descriptors, &self.0).py()
    }

    fn mean_log_likelihood(&self, descriptors: Vec<Vec<f64>>) -> f64 {
        self.0.mean_log_likelihood(&descriptors)
    }

    fn to_text(&self) -> String {
        encoding::format_codebook(&self.0)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        encoding::parse_codebook(text).py().map(PyCodebook)
    }
}

/// One-vs-rest linear SVMs.
#[pyclass(name = "SvmModel", module = "trailblaze", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PySvmModel(classify::SvmModel);

#[pymethods]
impl PySvmModel {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.labels.clone()
    }

    fn predict(&self, fv: Vec<f64>) -> PyResult<String> {
        classify::predict(&self.0, &fv).py()
    }

    fn scores(&self, fv: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.scores(&fv).py()
    }

    fn to_text(&self) -> String {
        classify::format_model(&self.0)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        classify::parse_model(text).py().map(PySvmModel)
    }
}

/// Every knob of an end-to-end run; round-trips through `key=value` text.
#[pyclass(name = "Config", module = "trailblaze", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(PipelineConfig);

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(d) = overrides {
            for (k, v) in d.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string().to_lowercase()).py()?;
            }
        }
        Ok(PyConfig(cfg))
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).py()
    }

    fn to_text(&self) -> String {
        self.0.to_string()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        text.parse().py().map(PyConfig)
    }

    fn __repr__(&self) -> String {
        format!("Config(algo={}, length={}, order={}, k={})", self.0.algo, self.0.length, self.0.order, self.0.k)
    }
}

/// Renders a scene given in `key=value` text; returns `(left, right)`.
#[pyfunction]
fn synth_scene(text: &str) -> PyResult<(PyClip, PyClip)> {
    let spec: SceneSpec = text.parse().py()?;
    let (l, r, _) = media::synth_stereo(&spec).py()?;
    Ok((PyClip(l), PyClip(r)))
}

/// Trajectories of a clip. Regions are detected by background subtraction
/// unless `full_frame` is set.
#[pyfunction]
#[pyo3(signature = (clip, algo="fb", length=21, full_frame=false))]
fn extract(py: Python<'_>, clip: &PyClip, algo: &str, length: usize, full_frame: bool) -> PyResult<Vec<PyTrajectory>> {
    let algo: Algorithm = algo.parse().py()?;
    let clip = &clip.0;
    let trajs = py
        .detach(|| -> trailblaze::Result<_> {
            let rois = if full_frame { full_frame_rois(clip) } else { detect_rois(&clip.to_grayscale()?, PipelineConfig::default().roi_params())? };
            let params = tracking::TrackingParams { length, ..Default::default() };
            tracking::extract(algo, clip, &rois, &params)
        })
        .py()?;
    Ok(trajs.into_iter().map(PyTrajectory).collect())
}

/// Stacked forward differences of orders `1..=order`.
#[pyfunction]
fn describe(trajectory: &PyTrajectory, order: usize) -> PyResult<Vec<f64>> {
    Ok(shape::describe(&trajectory.0, order).py()?.values)
}

#[pyfunction]
fn descriptor_dim(n: usize, length: usize, order: usize) -> usize {
    shape::descriptor_dim(n, length, order)
}

/// EM fit of a `k`-component diagonal mixture.
#[pyfunction]
#[pyo3(signature = (descriptors, k, seed=0, max_iters=100))]
fn fit_gmm(py: Python<'_>, descriptors: Vec<Vec<f64>>, k: usize, seed: u64, max_iters: usize) -> PyResult<PyCodebook> {
    py.detach(|| encoding::fit_gmm(&descriptors, k, seed, max_iters)).py().map(PyCodebook)
}

#[pyfunction]
#[pyo3(signature = (fvs, labels, c=1.0, epochs=50, seed=0))]
fn train_svm(fvs: Vec<Vec<f64>>, labels: Vec<String>, c: f64, epochs: usize, seed: u64) -> PyResult<PySvmModel> {
    if fvs.len() != labels.len() {
        return Err(PyValueError::new_err("one label per Fisher vector required"));
    }
    let examples: Vec<LabeledVideo> = fvs
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (fv, label))| LabeledVideo { clip_id: format!("v{i}"), label, actor: String::new(), fv })
        .collect();
    classify::train(&examples, &classify::SvmParams { c, epochs, seed }).py().map(PySvmModel)
}

/// Eight-point fundamental matrix from `((xl, yl), (xr, yr))` matches, row-major.
#[pyfunction]
fn estimate_fundamental(matches: Vec<((f64, f64), (f64, f64))>) -> PyResult<Vec<Vec<f64>>> {
    let f = stereo::estimate_fundamental(&matches).py()?;
    Ok((0..3).map(|r| (0..3).map(|c| f[(r, c)]).collect()).collect())
}

/// Leave-one-actor-out confusion matrix CSV on a built-in synthetic dataset
/// (`recognition` or `depth_pair`).
#[pyfunction]
#[pyo3(signature = (dataset, config=None))]
fn run_dataset(py: Python<'_>, dataset: &str, config: Option<&PyConfig>) -> PyResult<String> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let spec = match dataset {
        "recognition" => DatasetSpec::recognition(cfg.seed),
        "depth_pair" => DatasetSpec::depth_pair(cfg.seed),
        other => return Err(PyValueError::new_err(format!("unknown dataset `{other}`"))),
    };
    py.detach(|| -> trailblaze::Result<String> {
        let videos = spec
            .videos()?
            .iter()
            .map(|v| {
                let (left, right) = pipeline::render_video(v)?;
                Ok(pipeline::Video { clip_id: v.clip_id.clone(), label: v.label.clone(), actor: v.actor.clone(), left, right: Some(right) })
            })
            .collect::<trailblaze::Result<Vec<_>>>()?;
        Ok(pipeline::run_experiment(&videos, &cfg)?.to_csv())
    })
    .py()
}

#[pymodule(name = "trailblaze")]
fn trailblaze_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClip>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyCodebook>()?;
    m.add_class::<PySvmModel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(synth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    m.add_function(wrap_pyfunction!(descriptor_dim, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(train_svm, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fundamental, m)?)?;
    m.add_function(wrap_pyfunction!(run_dataset, m)?)?;
    Ok(())
}
