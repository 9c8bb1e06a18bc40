//! Python module `hssnb`: datasets, the network, checkpoints, metrics and
//! the gradient check. Arrays cross the boundary as flat lists of floats
//! in the same row-major layout the Rust side uses.

use hssnb_core::data::{extract_patches, load_dataset, pca_apply, pca_fit, save_dataset, stratified_split, synth_generate};
use hssnb_core::network::{
    build_model, evaluate, grad_check, grad_check_case, load_checkpoint, save_checkpoint, train, ArchConfig,
    GradCheckOptions, HssnbModel, Seeds, TrainConfig,
};
use hssnb_core::{Error, HsiCube, LabelMap, Rng, Tensor};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Load(_) | Error::Checkpoint(_) => PyIOError::new_err(e.to_string()),
        Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Hyperspectral cube plus its ground-truth label map.
#[pyclass(name = "Dataset", module = "hssnb", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    cube: HsiCube,
    labels: LabelMap,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(width: usize, height: usize, bands: usize, classes: usize, values: Vec<f64>, labels: Vec<u16>) -> PyResult<Self> {
        let cube = HsiCube::new(width, height, bands, values).map_err(to_py)?;
        let labels = LabelMap::new(width, height, classes, labels).map_err(to_py)?;
        Ok(PyDataset { cube, labels })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (cube, labels) = load_dataset(path).map_err(to_py)?;
        Ok(PyDataset { cube, labels })
    }

    #[pyo3(signature = (path, name = "dataset"))]
    fn save(&self, path: &str, name: &str) -> PyResult<()> {
        save_dataset(path, name, &self.cube, &self.labels).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.cube.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.cube.height()
    }

    #[getter]
    fn bands(&self) -> usize {
        self.cube.bands()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.labels.classes()
    }

    /// Flat (row, col, band) values.
    fn values(&self) -> Vec<f64> {
        self.cube.values().data().to_vec()
    }

    fn labels(&self) -> Vec<u16> {
        self.labels.labels().to_vec()
    }

    fn pixel(&self, row: usize, col: usize) -> PyResult<Vec<f64>> {
        if row >= self.cube.height() || col >= self.cube.width() {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        Ok(self.cube.pixel(row, col).to_vec())
    }

    /// Same labels, bands reduced to `components` principal components.
    fn pca(&self, components: usize) -> PyResult<PyDataset> {
        let model = pca_fit(&self.cube, components).map_err(to_py)?;
        let cube = pca_apply(&model, &self.cube).map_err(to_py)?;
        Ok(PyDataset {
            cube,
            labels: self.labels.clone(),
        })
    }

    /// `(patches, labels)`: one flat D·D·bands patch per labeled pixel.
    fn patches(&self, window: usize) -> PyResult<(Vec<Vec<f64>>, Vec<u16>)> {
        let set = extract_patches(&self.cube, &self.labels, window).map_err(to_py)?;
        Ok(((0..set.len()).map(|i| set.patch(i).to_vec()).collect(), set.labels().to_vec()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}x{}x{}, {} classes)",
            self.cube.width(),
            self.cube.height(),
            self.cube.bands(),
            self.labels.classes()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (width = 32, height = 32, bands = 16, classes = 3, noise = 0.05, seed = 7))]
fn synth(width: usize, height: usize, bands: usize, classes: usize, noise: f64, seed: u64) -> PyResult<PyDataset> {
    let (cube, labels) = synth_generate(width, height, bands, classes, noise, &mut Rng::new(seed)).map_err(to_py)?;
    Ok(PyDataset { cube, labels })
}

fn arch_for(preset: &str, classes: usize, window: Option<usize>, bands: Option<usize>, peepholes: bool) -> PyResult<ArchConfig> {
    let mut arch = match preset {
        "paper" => ArchConfig::paper(classes),
        "reduced" => ArchConfig::reduced(11, 8, classes),
        "gradcheck" => ArchConfig {
            classes,
            ..ArchConfig::gradcheck(peepholes)
        },
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    if let Some(w) = window {
        arch.window = w;
    }
    if let Some(b) = bands {
        arch.bands = b;
    }
    arch.peepholes = peepholes;
    Ok(arch)
}

/// The hybrid 3-D/2-D CNN + Bi-LSTM classifier.
#[pyclass(name = "Model", module = "hssnb")]
struct PyModel {
    model: HssnbModel,
    seed: u64,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (preset = "paper", classes = 16, window = None, bands = None, peepholes = false, seed = 0))]
    fn new(preset: &str, classes: usize, window: Option<usize>, bands: Option<usize>, peepholes: bool, seed: u64) -> PyResult<Self> {
        let arch = arch_for(preset, classes, window, bands, peepholes)?;
        let model = build_model(&arch, &mut Rng::new(seed)).map_err(to_py)?;
        Ok(PyModel { model, seed })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (model, header) = load_checkpoint(path).map_err(to_py)?;
        Ok(PyModel { model, seed: header.seed })
    }

    #[pyo3(signature = (path, epoch = 0))]
    fn save(&self, path: &str, epoch: usize) -> PyResult<()> {
        save_checkpoint(path, &self.model, self.seed, epoch, None).map_err(to_py)
    }

    #[getter]
    fn window(&self) -> usize {
        self.model.arch().window
    }

    #[getter]
    fn bands(&self) -> usize {
        self.model.arch().bands
    }

    #[getter]
    fn classes(&self) -> usize {
        self.model.classes()
    }

    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    /// `[(layer, trainable parameters)]` for every layer, in forward order.
    fn layer_parameter_counts(&self) -> Vec<(String, usize)> {
        self.model.layer_parameter_counts()
    }

    /// `[(layer, output shape)]`.
    fn output_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.model.summary().into_iter().map(|r| (r.name, r.output_shape)).collect()
    }

    fn summary(&self) -> String {
        hssnb_core::network::format_summary(&self.model.summary())
    }

    /// Class probabilities for one flat D·D·bands patch (inference mode).
    fn predict_proba(&self, patch: Vec<f64>) -> PyResult<Vec<f64>> {
        let a = self.model.arch();
        let t = Tensor::new(&[a.window, a.window, a.bands], patch).map_err(to_py)?;
        Ok(self.model.predict_proba(&t).map_err(to_py)?.data().to_vec())
    }

    /// Trains on a stratified split of `dataset` (PCA already applied, band
    /// count equal to the model's) and returns `(history, test_scores)`.
    #[pyo3(signature = (dataset, epochs = 10, batch_size = 32, learning_rate = 1e-3, train_fraction = 0.3, seed = 0))]
    fn fit(
        &mut self,
        dataset: &PyDataset,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        train_fraction: f64,
        seed: u64,
    ) -> PyResult<(Vec<(usize, f64, f64)>, (f64, f64, f64))> {
        let a = self.model.arch().clone();
        let cfg = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            train_fraction,
            window: a.window,
            pca_components: a.bands,
            seed,
            ..TrainConfig::default()
        };
        let set = extract_patches(&dataset.cube, &dataset.labels, a.window).map_err(to_py)?;
        let (tr, te) = stratified_split(&set, train_fraction, &mut Rng::new(cfg.seeds().split)).map_err(to_py)?;
        let history = train(&mut self.model, &tr, &cfg).map_err(to_py)?;
        let s = evaluate(&self.model, &te, false).and_then(|m| m.scores()).map_err(to_py)?;
        Ok((
            history.epochs.iter().map(|e| (e.epoch, e.loss, e.train_accuracy)).collect(),
            (s.kappa, s.average_accuracy, s.overall_accuracy),
        ))
    }
}

#[pyclass(name = "ConfusionMatrix", module = "hssnb")]
struct PyConfusionMatrix {
    inner: hssnb_core::ConfusionMatrix,
}

#[pymethods]
impl PyConfusionMatrix {
    #[new]
    #[pyo3(signature = (classes, counts = None))]
    fn new(classes: usize, counts: Option<Vec<u64>>) -> PyResult<Self> {
        let inner = match counts {
            Some(c) => hssnb_core::ConfusionMatrix::from_counts(classes, c).map_err(to_py)?,
            None => hssnb_core::ConfusionMatrix::new(classes),
        };
        Ok(PyConfusionMatrix { inner })
    }

    fn accumulate(&mut self, truth: u16, predicted: u16) -> PyResult<()> {
        self.inner.accumulate(truth, predicted).map_err(to_py)
    }

    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }

    fn overall_accuracy(&self) -> PyResult<f64> {
        self.inner.overall_accuracy().map_err(to_py)
    }

    fn average_accuracy(&self) -> PyResult<f64> {
        self.inner.average_accuracy().map_err(to_py)
    }

    fn kappa(&self) -> PyResult<f64> {
        self.inner.kappa().map_err(to_py)
    }
}

/// Finite-difference check of every parameter gradient on the small
/// preset (`"reduced"` or `"paper-kernels"`), seeded like the CLI.
/// Returns `(passed, max_relative_error, [(tensor, error)])`.
#[pyfunction]
#[pyo3(signature = (peepholes = false, seed = 0, tolerance = 1e-4, epsilon = 1e-5, preset = "reduced"))]
fn gradcheck(
    peepholes: bool,
    seed: u64,
    tolerance: f64,
    epsilon: f64,
    preset: &str,
) -> PyResult<(bool, f64, Vec<(String, f64)>)> {
    let arch = match preset {
        "reduced" => ArchConfig::gradcheck(peepholes),
        "paper-kernels" => ArchConfig::gradcheck_full_kernels(peepholes),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    let (model, patch, target) = grad_check_case(&arch, seed).map_err(to_py)?;
    let opts = GradCheckOptions {
        tolerance,
        epsilon,
        dropout_seed: Seeds::derive(seed).dropout,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&model, &patch, &target, &opts).map_err(to_py)?;
    Ok((
        report.passed(),
        report.max_relative_error(),
        report.tensors.iter().map(|t| (t.name.clone(), t.max_relative_error)).collect(),
    ))
}

#[pymodule]
fn hssnb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfusionMatrix>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
