//! Python bindings for the population-aware diffusion generator: build
//! datasets, train the model, sample synthetic series, and run the full
//! evaluation suite from Python.
//!
//! ```python
//! import tsgen
//! ds = tsgen.make_sines(200, 24, 5, seed=0)
//! cfg = tsgen.TrainConfig(24, 5, epochs=100, hidden=32)
//! model, log = tsgen.train(ds, cfg)
//! syn = model.generate(100, seed=7)
//! print(tsgen.evaluate(ds, syn))
//! ```

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsgen_core::backbone::BackboneState;
use tsgen_core::checkpoint::{load_checkpoint, save_checkpoint};
use tsgen_core::data::{self, Scaler};
use tsgen_core::error::Error as CoreError;
use tsgen_core::eval;
use tsgen_core::plots;
use tsgen_core::schedule;
use tsgen_core::train::{train as run_training, TrainConfig as CoreTrainConfig};
use tsgen_core::EvalSettings;

fn to_py(e: CoreError) -> PyErr {
    match e {
        CoreError::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A set of fixed-length multivariate series plus the per-dimension
/// scaler that maps them between raw and normalized [-1, 1] space.
#[pyclass]
#[derive(Clone)]
struct Dataset {
    inner: data::Dataset,
}

#[pymethods]
impl Dataset {
    /// `(n, length, features)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.samples.dim()
    }

    /// Normalized samples as nested lists `[n][length][features]`.
    fn samples(&self) -> Vec<Vec<Vec<f64>>> {
        nested(&self.inner.samples)
    }

    /// Samples mapped back to raw value space.
    fn samples_denormalized(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let raw = data::denormalize(&self.inner.samples, &self.inner.scaler).map_err(to_py)?;
        Ok(nested(&raw))
    }

    /// Persist as a dataset directory (`meta.json` + `samples.bin`).
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        data::save_dataset(&dir, &self.inner, None, None).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let (n, l, f) = self.inner.samples.dim();
        format!("Dataset(n={n}, length={l}, features={f})")
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }
}

fn nested(batch: &tsgen_core::SeriesBatch) -> Vec<Vec<Vec<f64>>> {
    let (n, l, f) = batch.dim();
    (0..n)
        .map(|i| (0..l).map(|t| (0..f).map(|k| batch[[i, t, k]]).collect()).collect())
        .collect()
}

/// Training settings; unspecified arguments take the length-24-class
/// defaults (cosine schedule, T=250, batch 64, hidden 128, 3 DiT blocks,
/// shared-step sampling, alpha 0.0005).
#[pyclass]
#[derive(Clone)]
struct TrainConfig {
    inner: CoreTrainConfig,
}

#[pymethods]
impl TrainConfig {
    #[new]
    #[pyo3(signature = (length, features, *, epochs=None, batch=None, learning_rate=None,
        weight_decay=None, alpha=None, steps=None, hidden=None, heads=None,
        encoder_blocks=None, dit_blocks=None, strategy=None, seed=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        length: usize,
        features: usize,
        epochs: Option<usize>,
        batch: Option<usize>,
        learning_rate: Option<f64>,
        weight_decay: Option<f64>,
        alpha: Option<f64>,
        steps: Option<usize>,
        hidden: Option<usize>,
        heads: Option<usize>,
        encoder_blocks: Option<usize>,
        dit_blocks: Option<usize>,
        strategy: Option<&str>,
        seed: Option<u64>,
    ) -> PyResult<TrainConfig> {
        let mut inner = CoreTrainConfig::defaults_for(length, features);
        if let Some(v) = epochs {
            inner.epochs = v;
        }
        if let Some(v) = batch {
            inner.batch = v;
        }
        if let Some(v) = learning_rate {
            inner.learning_rate = v;
        }
        if let Some(v) = weight_decay {
            inner.weight_decay = v;
        }
        if let Some(v) = alpha {
            inner.alpha = v;
        }
        if let Some(v) = steps {
            inner.t_count = v;
        }
        if let Some(v) = hidden {
            inner.backbone.hidden = v;
        }
        if let Some(v) = heads {
            inner.backbone.heads = v;
        }
        if let Some(v) = encoder_blocks {
            inner.backbone.encoder_blocks = v;
        }
        if let Some(v) = dit_blocks {
            inner.backbone.dit_blocks = v;
        }
        if let Some(v) = strategy {
            inner.strategy = v.parse().map_err(PyValueError::new_err)?;
        }
        if let Some(v) = seed {
            inner.seed = v;
        }
        Ok(TrainConfig { inner })
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.epochs
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.t_count
    }

    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "TrainConfig(length={}, features={}, epochs={}, batch={}, hidden={}, \
             dit_blocks={}, steps={}, alpha={}, strategy={}, seed={})",
            c.backbone.length,
            c.backbone.features,
            c.epochs,
            c.batch,
            c.backbone.hidden,
            c.backbone.dit_blocks,
            c.t_count,
            c.alpha,
            c.strategy,
            c.seed
        )
    }
}

/// A trained denoiser plus the schedule and scaler needed to sample.
#[pyclass]
struct Model {
    state: BackboneState,
    scaler: Scaler,
    config: CoreTrainConfig,
}

#[pymethods]
impl Model {
    /// Draw `n` synthetic series; the same seed always reproduces the
    /// same samples, also across save/load.
    #[pyo3(signature = (n, *, seed=0))]
    fn generate(&self, n: usize, seed: u64) -> PyResult<Dataset> {
        if n < 1 {
            return Err(PyValueError::new_err("n must be >= 1"));
        }
        let sched = self.config.schedule.build(self.state.t_count);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let samples = schedule::generate(&self.state, n, &sched, &mut rng).map_err(to_py)?;
        Ok(Dataset { inner: data::Dataset { samples, scaler: self.scaler.clone() } })
    }

    /// Persist as a checkpoint directory (`manifest.json` + `params.bin`).
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_checkpoint(&dir, &self.state, &self.scaler, &self.config).map_err(to_py)
    }

    /// Reload a checkpoint directory written by `save` (or the CLI).
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Model> {
        let ck = load_checkpoint(Path::new(&dir)).map_err(to_py)?;
        let mut config =
            CoreTrainConfig::defaults_for(ck.state.config.length, ck.state.config.features);
        config.backbone = ck.state.config;
        config.schedule = ck.schedule;
        config.t_count = ck.state.t_count;
        config.seed = ck.seed;
        config.alpha = ck.alpha;
        config.bandwidths = ck.bandwidths;
        Ok(Model { state: ck.state, scaler: ck.scaler, config })
    }

    fn __repr__(&self) -> String {
        let c = self.state.config;
        format!(
            "Model(length={}, features={}, hidden={}, dit_blocks={}, steps={})",
            c.length, c.features, c.hidden, c.dit_blocks, self.state.t_count
        )
    }
}

/// Synthetic sine benchmark: per (sample, feature) a random frequency and
/// phase, min-max normalized per dimension.
#[pyfunction]
#[pyo3(signature = (n, length, features, *, seed=0))]
fn make_sines(n: usize, length: usize, features: usize, seed: u64) -> Dataset {
    Dataset { inner: data::make_sines(n, length, features, seed) }
}

/// Load a dataset directory written by `Dataset.save` (or the CLI).
#[pyfunction]
fn load_dataset(dir: PathBuf) -> PyResult<Dataset> {
    Ok(Dataset { inner: data::load_dataset(&dir).map_err(to_py)? })
}

/// Slice a delimited numeric table into overlapping windows of `length`
/// rows every `stride` rows, min-max normalized per column.
#[pyfunction]
#[pyo3(signature = (path, length, *, stride=1, delimiter=","))]
fn prepare_table(path: PathBuf, length: usize, stride: usize, delimiter: &str) -> PyResult<Dataset> {
    let mut chars = delimiter.chars();
    let (Some(d), None) = (chars.next(), chars.next()) else {
        return Err(PyValueError::new_err("delimiter must be a single character"));
    };
    let table = data::load_table(&path, d).map_err(to_py)?;
    Ok(Dataset { inner: data::window(&table, length, stride).map_err(to_py)? })
}

/// Train a model; returns `(Model, log)` where `log` is a list of per-
/// iteration dicts (epoch, l0, l_pop, l_total, t1, wall_ms, clipped).
#[pyfunction]
fn train(py: Python<'_>, dataset: &Dataset, config: &TrainConfig) -> PyResult<(Model, PyObject)> {
    let (state, log) = run_training(&dataset.inner, &config.inner).map_err(to_py)?;
    let rows = pyo3::types::PyList::empty_bound(py);
    for r in &log.records {
        let d = PyDict::new_bound(py);
        d.set_item("epoch", r.epoch)?;
        d.set_item("l0", r.l0)?;
        d.set_item("l_pop", r.l_pop)?;
        d.set_item("l_total", r.l_total)?;
        d.set_item("t1", r.t1)?;
        d.set_item("wall_ms", r.wall_ms)?;
        d.set_item("clipped", r.clipped)?;
        rows.append(d)?;
    }
    let model = Model {
        state,
        scaler: dataset.inner.scaler.clone(),
        config: config.inner.clone(),
    };
    Ok((model, rows.into()))
}

/// Score a synthetic dataset against a real one; returns a dict with
/// vds, fdds, da_mean/std, pred_mean/std, mdd, acd, sd, kd, ed, dtw plus
/// the evaluation settings used.
#[pyfunction]
#[pyo3(signature = (real, syn, *, seed=0, repeats=None, steps=None))]
fn evaluate(
    py: Python<'_>,
    real: &Dataset,
    syn: &Dataset,
    seed: u64,
    repeats: Option<usize>,
    steps: Option<usize>,
) -> PyResult<PyObject> {
    let mut settings = EvalSettings { seed, ..EvalSettings::default() };
    if let Some(v) = repeats {
        settings.repeats = v;
    }
    if let Some(v) = steps {
        settings.steps = v;
    }
    let report = eval::evaluate(&real.inner, &syn.inner, &settings).map_err(to_py)?;
    let d = PyDict::new_bound(py);
    d.set_item("vds", report.vds)?;
    d.set_item("fdds", report.fdds)?;
    d.set_item("da_mean", report.da_mean)?;
    d.set_item("da_std", report.da_std)?;
    d.set_item("pred_mean", report.pred_mean)?;
    d.set_item("pred_std", report.pred_std)?;
    d.set_item("mdd", report.mdd)?;
    d.set_item("acd", report.acd)?;
    d.set_item("sd", report.sd)?;
    d.set_item("kd", report.kd)?;
    d.set_item("ed", report.ed)?;
    d.set_item("dtw", report.dtw)?;
    d.set_item("bins", report.bins)?;
    d.set_item("bandwidths", report.bandwidths.clone())?;
    d.set_item("repeats", report.repeats)?;
    d.set_item("seed", report.seed)?;
    Ok(d.into())
}

/// Export plot data (correlation histograms, value densities, 2-D
/// embeddings) as CSV + PNG files; returns the paths written.
#[pyfunction]
#[pyo3(signature = (real, syn, outdir, *, seed=0))]
fn export_plots(real: &Dataset, syn: &Dataset, outdir: PathBuf, seed: u64) -> PyResult<Vec<String>> {
    let files = plots::export_plots(&real.inner, &syn.inner, &outdir, seed).map_err(to_py)?;
    Ok(files.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn tsgen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<TrainConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(make_sines, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_table, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(export_plots, m)?)?;
    Ok(())
}
