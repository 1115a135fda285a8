//! Python bindings: `pyldm.Dataset`, `pyldm.Model`, and helpers for margins,
//! accuracy and cross-validation.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ldm::analysis;
use ldm::data::{self, Label, LabeledDataset, SparseVector};
use ldm::model_file::ModelFile;
use ldm::model_selection::{cross_validate, ModelFamily, SearchGrid};
use ldm::pipeline::{train_model, KernelChoice, SolverKind, TrainOptions};
use ldm::LdmError;

fn err(e: LdmError) -> PyErr {
    match e {
        LdmError::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (LdmError::Factorization { .. } | LdmError::TooLarge { .. } | LdmError::Diverged(_)) => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

fn label(v: i64) -> PyResult<Label> {
    match v {
        1 => Ok(Label::Positive),
        -1 => Ok(Label::Negative),
        _ => Err(PyValueError::new_err(format!("labels must be +1 or -1, got {v}"))),
    }
}

fn signs(labels: &[Label]) -> Vec<i64> {
    labels.iter().map(|l| l.sign() as i64).collect()
}

/// Labelled sparse data. Feature indices are 1-based as in the text format.
#[pyclass(frozen)]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    /// Build from dense rows and +1/-1 labels.
    #[new]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> PyResult<Self> {
        let xs = rows.iter().map(|r| SparseVector::from_dense(r)).collect::<ldm::Result<Vec<_>>>().map_err(err)?;
        let ys = labels.into_iter().map(label).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: LabeledDataset::new(xs, ys).map_err(err)? })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: data::parse_sparse(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: LabeledDataset::read_file(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.write_file(path).map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_sparse_text()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn labels(&self) -> Vec<i64> {
        signs(self.inner.labels())
    }

    fn dense(&self) -> Vec<Vec<f64>> {
        let dim = self.inner.dimension();
        self.inner.instances().iter().map(|x| x.to_dense(dim)).collect()
    }

    /// Seeded `(train, test)` split with `ceil(fraction * len)` training rows.
    #[pyo3(signature = (fraction, seed=0))]
    fn split(&self, fraction: f64, seed: u64) -> PyResult<(Dataset, Dataset)> {
        let (a, b) = data::random_split(&self.inner, fraction, seed).map_err(err)?;
        Ok((Dataset { inner: a }, Dataset { inner: b }))
    }

    fn __repr__(&self) -> String {
        let (pos, neg) = self.inner.class_counts();
        format!("Dataset(len={}, dimension={}, positive={pos}, negative={neg})", self.inner.len(), self.inner.dimension())
    }
}

/// A trained model with its hyperparameters and optional feature scaling.
#[pyclass(frozen)]
struct Model {
    inner: ModelFile,
    report: Option<String>,
}

#[pymethods]
impl Model {
    /// Train on `data`. `solver` is "kernel" or "linear", `kernel` is
    /// "linear" or "rbf". For rbf, `width` fixes the width; otherwise
    /// `width_factor` times the mean pairwise distance is used.
    #[staticmethod]
    #[pyo3(signature = (
        data, solver="kernel", kernel="linear", c=10.0, lambda1=0.0625, lambda2=0.0625,
        width=None, width_factor=1.0, epochs=None, tol=1e-3, eta0=None, seed=0, normalize=true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        data: &Dataset,
        solver: &str,
        kernel: &str,
        c: f64,
        lambda1: f64,
        lambda2: f64,
        width: Option<f64>,
        width_factor: f64,
        epochs: Option<usize>,
        tol: f64,
        eta0: Option<f64>,
        seed: u64,
        normalize: bool,
    ) -> PyResult<Self> {
        let solver = match solver {
            "kernel" => SolverKind::Kernel,
            "linear" => SolverKind::Linear,
            s => return Err(PyValueError::new_err(format!("unknown solver {s:?}"))),
        };
        let kernel = match (kernel, width) {
            ("linear", _) => KernelChoice::Linear,
            ("rbf", Some(w)) => KernelChoice::RbfWidth(w),
            ("rbf", None) => KernelChoice::RbfFactor(width_factor),
            (k, _) => return Err(PyValueError::new_err(format!("unknown kernel {k:?}"))),
        };
        let opts = TrainOptions { solver, kernel, c, lambda1, lambda2, epochs, tolerance: tol, eta0, seed, normalize };
        let (file, report) = py.detach(|| train_model(&data.inner, &opts)).map_err(err)?;
        Ok(Self { inner: file, report: Some(report.summary()) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelFile::load(path).map_err(err)?, report: None })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelFile::parse(text).map_err(err)?, report: None })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Solver summary line; `None` for loaded models.
    #[getter]
    fn report(&self) -> Option<String> {
        self.report.clone()
    }

    fn scores(&self, data: &Dataset) -> Vec<f64> {
        data.inner.instances().iter().map(|x| self.inner.model.score(x)).collect()
    }

    fn predict(&self, data: &Dataset) -> Vec<i64> {
        data.inner.instances().iter().map(|x| self.inner.model.predict(x).0.sign() as i64).collect()
    }

    /// Margin statistics of this model on `data`.
    fn margins<'py>(&self, py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        margins(py, self.scores(data), data.labels())
    }
}

/// `{"mean", "variance", "minimum", "margins", "cumulative"}` for scores
/// against +1/-1 labels.
#[pyfunction]
fn margins(py: Python<'_>, scores: Vec<f64>, labels: Vec<i64>) -> PyResult<Bound<'_, PyDict>> {
    let ys = labels.into_iter().map(label).collect::<PyResult<Vec<_>>>()?;
    let stats = analysis::compute_margins(&scores, &ys).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("mean", stats.mean)?;
    out.set_item("variance", stats.variance)?;
    out.set_item("minimum", stats.minimum)?;
    out.set_item("margins", stats.margins)?;
    out.set_item("cumulative", stats.cumulative)?;
    Ok(out)
}

#[pyfunction]
fn accuracy(predicted: Vec<i64>, truth: Vec<i64>) -> PyResult<f64> {
    let p = predicted.into_iter().map(label).collect::<PyResult<Vec<_>>>()?;
    let t = truth.into_iter().map(label).collect::<PyResult<Vec<_>>>()?;
    analysis::accuracy(&p, &t).map_err(err)
}

/// Grid search by k-fold cross-validation. Returns a dict with the best
/// configuration and every configuration's mean accuracy.
#[pyfunction]
#[pyo3(signature = (data, solver="kernel", kernel="linear", folds=5, seed=0, c_grid=None, lambda_grid=None, width_grid=None))]
#[allow(clippy::too_many_arguments)]
fn cross_validation<'py>(
    py: Python<'py>,
    data: &Dataset,
    solver: &str,
    kernel: &str,
    folds: usize,
    seed: u64,
    c_grid: Option<Vec<f64>>,
    lambda_grid: Option<Vec<f64>>,
    width_grid: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let family = match (solver, kernel) {
        ("kernel", "linear") => ModelFamily::KernelLinear,
        ("kernel", "rbf") => ModelFamily::KernelRbf,
        ("linear", "linear") => ModelFamily::Linear,
        (s, k) => return Err(PyValueError::new_err(format!("unsupported solver/kernel {s:?}/{k:?}"))),
    };
    let default = SearchGrid::default();
    let grid = SearchGrid {
        c_values: c_grid.unwrap_or(default.c_values),
        lambda_values: lambda_grid.unwrap_or(default.lambda_values),
        width_multipliers: width_grid.unwrap_or(default.width_multipliers),
    };
    let result = py.detach(|| cross_validate(&data.inner, family, &grid, folds, seed)).map_err(err)?;
    let cfg = |c: &ldm::model_selection::Config| (c.c, c.lambda1, c.lambda2, c.width);
    let out = PyDict::new(py);
    out.set_item("best", cfg(&result.best))?;
    out.set_item("best_accuracy", result.best_accuracy())?;
    out.set_item("configs", result.configs.iter().map(cfg).collect::<Vec<_>>())?;
    out.set_item("mean_accuracy", result.mean_accuracy.clone())?;
    Ok(out)
}

#[pymodule]
fn pyldm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(margins, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validation, m)?)?;
    Ok(())
}
