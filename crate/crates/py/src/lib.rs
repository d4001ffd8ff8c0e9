//! Python bindings. Images cross the boundary as flat row-major `H*W*3`
//! lists of floats in `[0, 1]`; masks as flat `H*W` lists of 0.0 / 1.0.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use vehicle_amodal::app_trainer::AppTrainer;
use vehicle_amodal::cli::{self, Config, Split};
use vehicle_amodal::image::{ImageTensor, MaskTensor};
use vehicle_amodal::metrics::{self, EvalConfig, Method, Proxies, Summary};
use vehicle_amodal::models::{self, NetRole};
use vehicle_amodal::pipeline::{self, Models, VisibleSegmenter};
use vehicle_amodal::seg_trainer::SegTrainer;
use vehicle_amodal::synth_data::{self, SynthConfig, TrainingSample};
use vehicle_amodal::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::MissingArtifact(_) => PyOSError::new_err(e.to_string()),
        Error::NonFinite { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn image(height: usize, width: usize, data: Vec<f32>) -> PyResult<ImageTensor> {
    ImageTensor::new(height, width, data).map_err(py_err)
}

fn mask(height: usize, width: usize, data: Vec<f32>) -> PyResult<MaskTensor> {
    let m = MaskTensor::new(height, width, data).map_err(py_err)?;
    m.require_binary("mask").map_err(py_err)?;
    Ok(m)
}

/// One synthetic training sample.
#[pyclass(name = "Sample", module = "vehicle_amodal_py", frozen, from_py_object)]
#[derive(Clone)]
struct PySample {
    inner: TrainingSample,
}

#[pymethods]
impl PySample {
    #[getter]
    fn sample_id(&self) -> String {
        self.inner.sample_id.clone()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.size().0
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.size().1
    }

    #[getter]
    fn vehicle_class(&self) -> Option<usize> {
        self.inner.vehicle_class
    }

    #[getter]
    fn occlusion_fraction(&self) -> f64 {
        self.inner.occlusion_fraction
    }

    fn image_occluded(&self) -> Vec<f32> {
        self.inner.image_occluded.data().to_vec()
    }

    fn target_unoccluded(&self) -> Vec<f32> {
        self.inner.target_unoccluded.data().to_vec()
    }

    fn background_plate(&self) -> Vec<f32> {
        self.inner.background_plate.data().to_vec()
    }

    fn visible_mask(&self) -> Vec<f32> {
        self.inner.visible_mask.data().to_vec()
    }

    fn full_mask(&self) -> Vec<f32> {
        self.inner.full_mask.data().to_vec()
    }

    fn invisible_region(&self) -> Vec<f32> {
        self.inner.invisible_region().data().to_vec()
    }

    fn __repr__(&self) -> String {
        let (h, w) = self.inner.size();
        format!("Sample(id={:?}, {h}x{w}, occlusion={:.3})", self.inner.sample_id, self.inner.occlusion_fraction)
    }
}

/// Experiment configuration.
#[pyclass(name = "Config", module = "vehicle_amodal_py", frozen)]
struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: Config::default() }
    }

    #[staticmethod]
    fn toy() -> Self {
        Self { inner: Config::toy() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Config::parse(text).map_err(py_err)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Samples of `split` ("train", "val", "test" or "proxy").
    fn load_split(&self, py: Python<'_>, split: &str) -> PyResult<Vec<PySample>> {
        let split = match split {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            "proxy" => Split::Proxy,
            other => return Err(PyValueError::new_err(format!("unknown split {other:?}"))),
        };
        let cfg = self.inner.clone();
        let samples = py.detach(move || cfg.load_split(split)).map_err(py_err)?;
        Ok(samples.into_iter().map(|inner| PySample { inner }).collect())
    }
}

/// Trained network weights and training counters.
#[pyclass(name = "Checkpoint", module = "vehicle_amodal_py", frozen)]
struct PyCheckpoint {
    inner: models::Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: models::load_checkpoint(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        models::save_checkpoint(&self.inner, &path).map_err(py_err)
    }

    fn roles(&self) -> Vec<&'static str> {
        self.inner.nets.keys().map(NetRole::as_str).collect()
    }

    fn counter(&self, name: &str) -> u64 {
        self.inner.counter(name)
    }

    #[getter]
    fn config_fingerprint(&self) -> String {
        self.inner.config_fingerprint.clone()
    }

    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        self.inner.to_bytes().map_err(py_err)
    }
}

/// Inference with a trained checkpoint.
#[pyclass(name = "Pipeline", module = "vehicle_amodal_py", frozen)]
struct PyPipeline {
    models: Models,
}

#[pymethods]
impl PyPipeline {
    #[new]
    fn new(checkpoint: &PyCheckpoint) -> PyResult<Self> {
        Ok(Self { models: Models::from_checkpoint(&checkpoint.inner).map_err(py_err)? })
    }

    /// Thresholded `G1` output united with the visible mask.
    fn complete_mask(&self, py: Python<'_>, height: usize, width: usize, image_data: Vec<f32>, visible: Vec<f32>) -> PyResult<Vec<f32>> {
        let (i, v) = (image(height, width, image_data)?, mask(height, width, visible)?);
        let g1 = &self.models.g1;
        let m = py.detach(|| pipeline::complete_mask(g1, &i, &v)).map_err(py_err)?;
        Ok(m.data().to_vec())
    }

    /// `iterations` refinement passes with a fixed visible mask.
    ///
    /// Returns one dict per pass with `completed_mask`, `generator_image`,
    /// `recovered_image` and `invisible_region`.
    #[pyo3(signature = (height, width, image_data, visible, iterations = pipeline::DEFAULT_ITERATIONS))]
    fn recover(
        &self,
        py: Python<'_>,
        height: usize,
        width: usize,
        image_data: Vec<f32>,
        visible: Vec<f32>,
        iterations: usize,
    ) -> PyResult<Vec<BTreeMap<&'static str, Vec<f32>>>> {
        let (i, v) = (image(height, width, image_data)?, mask(height, width, visible)?);
        let models = &self.models;
        let results = py.detach(|| pipeline::run_iterations(models, &VisibleSegmenter::Oracle(v), &i, iterations)).map_err(py_err)?;
        Ok(results
            .into_iter()
            .map(|r| {
                BTreeMap::from([
                    ("completed_mask", r.completed_mask.data().to_vec()),
                    ("generator_image", r.generator_image.data().to_vec()),
                    ("recovered_image", r.recovered_image.data().to_vec()),
                    ("invisible_region", r.invisible_region.data().to_vec()),
                ])
            })
            .collect())
    }
}

#[pyfunction]
#[pyo3(signature = (count, seed, image_size = 64))]
fn generate_dataset(py: Python<'_>, count: usize, seed: u64, image_size: usize) -> PyResult<Vec<PySample>> {
    let cfg = SynthConfig { image_size, ..SynthConfig::default() };
    let samples = py.detach(|| synth_data::generate_dataset(&cfg, seed, count)).map_err(py_err)?;
    Ok(samples.into_iter().map(|inner| PySample { inner }).collect())
}

/// Write samples under `dir`; returns the manifest path.
#[pyfunction]
fn write_dataset(samples: Vec<PySample>, dir: PathBuf) -> PyResult<PathBuf> {
    let samples: Vec<TrainingSample> = samples.into_iter().map(|s| s.inner).collect();
    synth_data::write_dataset(&samples, &dir).map_err(py_err)
}

#[pyfunction]
fn read_dataset(manifest: PathBuf) -> PyResult<Vec<PySample>> {
    Ok(synth_data::read_dataset(&manifest).map_err(py_err)?.into_iter().map(|inner| PySample { inner }).collect())
}

#[pyfunction]
fn mask_metrics(height: usize, width: usize, predicted: Vec<f32>, truth: Vec<f32>) -> PyResult<BTreeMap<&'static str, f64>> {
    let m = metrics::mask_metrics(&mask(height, width, predicted)?, &mask(height, width, truth)?).map_err(py_err)?;
    Ok(BTreeMap::from([("precision", m.precision), ("recall", m.recall), ("f1", m.f1), ("iou", m.iou), ("l1", m.l1), ("l2", m.l2)]))
}

/// `R = M ∖ M̂` and the image with `R` taken from `generated`.
#[pyfunction]
fn composite(height: usize, width: usize, image_data: Vec<f32>, generated: Vec<f32>, completed: Vec<f32>, visible: Vec<f32>) -> PyResult<(Vec<f32>, Vec<f32>)> {
    let (out, region) = pipeline::composite(&image(height, width, image_data)?, &image(height, width, generated)?, &mask(height, width, completed)?, &mask(height, width, visible)?)
        .map_err(py_err)?;
    Ok((out.data().to_vec(), region.data().to_vec()))
}

/// Train mask completion with the config's stage-1 settings.
#[pyfunction]
fn train_seg(py: Python<'_>, config: &PyConfig, samples: Vec<PySample>) -> PyResult<PyCheckpoint> {
    let cfg = config.inner.clone();
    let samples: Vec<TrainingSample> = samples.into_iter().map(|s| s.inner).collect();
    let out = py
        .detach(move || {
            let pool = cfg.load_pool()?;
            SegTrainer::new(cfg.seg_config())?.train(&samples, None, &pool, None)
        })
        .map_err(py_err)?;
    Ok(PyCheckpoint { inner: out.checkpoint })
}

/// Train appearance recovery; the result also carries the stage-1 networks.
#[pyfunction]
#[pyo3(signature = (config, samples, seg_checkpoint = None))]
fn train_app(py: Python<'_>, config: &PyConfig, samples: Vec<PySample>, seg_checkpoint: Option<&PyCheckpoint>) -> PyResult<PyCheckpoint> {
    let cfg = config.inner.clone();
    let samples: Vec<TrainingSample> = samples.into_iter().map(|s| s.inner).collect();
    let seg = seg_checkpoint.map(|c| c.inner.clone());
    let out = py.detach(move || AppTrainer::new(cfg.app_config())?.train(&samples, None, seg.as_ref(), None)).map_err(py_err)?;
    Ok(PyCheckpoint { inner: out.checkpoint })
}

fn summary_dict(s: &Summary) -> BTreeMap<&'static str, Option<f64>> {
    BTreeMap::from([
        ("iteration", Some(s.iteration as f64)),
        ("precision", Some(s.precision)),
        ("recall", Some(s.recall)),
        ("f1", Some(s.f1)),
        ("iou", Some(s.iou)),
        ("mask_l1", Some(s.mask_l1)),
        ("image_l1", Some(s.image_l1)),
        ("image_l2", Some(s.image_l2)),
        ("invisible_l1", s.invisible_l1),
        ("invisible_l2", s.invisible_l2),
    ])
}

/// Per-iteration mean metrics of `method` ("pipeline", "copy" or "ground_truth").
#[pyfunction]
#[pyo3(signature = (samples, method = "pipeline", checkpoint = None, iterations = pipeline::DEFAULT_ITERATIONS))]
fn evaluate(
    py: Python<'_>,
    samples: Vec<PySample>,
    method: &str,
    checkpoint: Option<&PyCheckpoint>,
    iterations: usize,
) -> PyResult<Vec<BTreeMap<&'static str, Option<f64>>>> {
    let samples: Vec<TrainingSample> = samples.into_iter().map(|s| s.inner).collect();
    let models = checkpoint.map(|c| Models::from_checkpoint(&c.inner)).transpose().map_err(py_err)?;
    let method = match (method, &models) {
        ("pipeline", Some(m)) => Method::Pipeline(m),
        ("pipeline", None) => return Err(PyValueError::new_err("the pipeline method needs a checkpoint")),
        ("copy", _) => Method::CopyInput,
        ("ground_truth", _) => Method::GroundTruth,
        (other, _) => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let cfg = EvalConfig { iterations, icp: false, ss: false, ..EvalConfig::default() };
    let report = py
        .detach(|| metrics::evaluate(method, &samples, &cfg, Proxies { classifier: None, segmenter: None }, "python", ""))
        .map_err(py_err)?;
    Ok(report.summaries.iter().map(summary_dict).collect())
}

/// Run the command-line interface; returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| cli::run(std::iter::once("amodal".to_string()).chain(args)))
}

#[pymodule]
fn vehicle_amodal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(mask_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(composite, m)?)?;
    m.add_function(wrap_pyfunction!(train_seg, m)?)?;
    m.add_function(wrap_pyfunction!(train_app, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
