//! Python bindings: states, a classical-data classifier wrapper, and the
//! analytic helpers (K-accuracy, generalization bound, schedule).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qal_core::data::Sample;
use qal_core::encoding::{ClassicalEncoderConfig, Encoder, LabelScheme, Payload};
use qal_core::eval::{self, Votes};
use qal_core::models::{average_hamiltonian, default_energy_grid, spectrum};
use qal_core::trainer::{self, TrainConfig, TrainMode};
use qal_core::{QalError, C64};

fn err(e: QalError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn votes(k: &Bound<'_, PyAny>) -> PyResult<Votes> {
    if let Ok(s) = k.extract::<String>() {
        return s.parse().map_err(err);
    }
    Votes::new(k.extract::<usize>()?).map_err(err)
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

#[pyclass(name = "PureState", from_py_object)]
#[derive(Clone)]
struct PyPureState {
    inner: qal_core::PureState,
}

#[pymethods]
impl PyPureState {
    #[new]
    fn new(amplitudes: Vec<C64>) -> PyResult<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(PyValueError::new_err(format!("length {dim} is not a power of two")));
        }
        let n = dim.trailing_zeros() as usize;
        Ok(Self { inner: qal_core::PureState::from_amplitudes(n, amplitudes).map_err(err)? })
    }

    #[staticmethod]
    fn zero(n_qubits: usize) -> Self {
        Self { inner: qal_core::PureState::zero(n_qubits) }
    }

    #[staticmethod]
    #[pyo3(signature = (n_qubits, seed=0))]
    fn haar_random(n_qubits: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { inner: qal_core::PureState::haar_random(n_qubits, &mut rng) }
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    #[getter]
    fn norm_sq(&self) -> f64 {
        self.inner.norm_sq()
    }

    fn amplitudes(&self) -> Vec<C64> {
        self.inner.amplitudes().to_vec()
    }

    fn fidelity(&self, other: &PyPureState) -> f64 {
        self.inner.fidelity(&other.inner)
    }

    /// Probability of reading 1 on qubit `q` (qubit 0 is the most significant bit).
    fn prob_one(&self, q: usize) -> PyResult<f64> {
        if q >= self.inner.n_qubits() {
            return Err(PyValueError::new_err(format!("qubit {q} out of range")));
        }
        Ok(self.inner.prob_one(q))
    }

    fn __repr__(&self) -> String {
        format!("PureState(n_qubits={}, norm_sq={:.6})", self.inner.n_qubits(), self.inner.norm_sq())
    }
}

/// Binary or k-class classifier over real feature vectors, encoded as
/// rotation angles.
#[pyclass]
struct Classifier {
    samples: Vec<Sample>,
    encoder: Encoder,
    scheme: LabelScheme,
    state: Option<qal_core::PureState>,
}

fn to_samples(features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Vec<Sample>> {
    if features.len() != labels.len() {
        return Err(PyValueError::new_err(format!("{} feature rows but {} labels", features.len(), labels.len())));
    }
    Ok(features.into_iter().zip(labels).map(|(x, label)| Sample { payload: Payload::Classical(x), label }).collect())
}

impl Classifier {
    fn trained(&self) -> PyResult<&qal_core::PureState> {
        self.state.as_ref().ok_or_else(|| PyValueError::new_err("classifier is not trained"))
    }
}

#[pymethods]
impl Classifier {
    #[new]
    #[pyo3(signature = (features, labels, n_qubits, classes=2, label_qubits=None))]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_qubits: usize,
        classes: usize,
        label_qubits: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let samples = to_samples(features, labels)?;
        if samples.iter().any(|s| s.label >= classes) {
            return Err(PyValueError::new_err(format!("labels must lie in 0..{classes}")));
        }
        let encoder = Encoder::Classical(ClassicalEncoderConfig::new(n_qubits, dim).map_err(err)?);
        let scheme = match label_qubits {
            Some(qs) => LabelScheme::with_measured(n_qubits, classes, qs),
            None => LabelScheme::new(n_qubits, classes),
        }
        .map_err(err)?;
        Ok(Self { samples, encoder, scheme, state: None })
    }

    /// Runs `steps` updates and returns a summary dict.
    #[pyo3(signature = (eta=0.1, steps=100, seed=0, mode="exact"))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        eta: f64,
        steps: usize,
        seed: u64,
        mode: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut cfg = TrainConfig::exact(eta, steps, seed);
        cfg.mode = match mode {
            "exact" => TrainMode::Exact,
            "sampled" => TrainMode::Sampled,
            other => return Err(PyValueError::new_err(format!("mode must be 'exact' or 'sampled', got '{other}'"))),
        };
        let trace = py.detach(|| trainer::train(&self.samples, &self.encoder, &self.scheme, &cfg)).map_err(err)?;
        self.state = trace.pure_state().cloned();
        json_to_py(py, &trace.summary_json())
    }

    #[getter]
    fn state(&self) -> Option<PyPureState> {
        self.state.clone().map(|inner| PyPureState { inner })
    }

    #[setter(state)]
    fn set_state(&mut self, s: PyPureState) -> PyResult<()> {
        if s.inner.n_qubits() != self.encoder.n_qubits() {
            return Err(PyValueError::new_err("state size does not match the classifier"));
        }
        self.state = Some(s.inner);
        Ok(())
    }

    /// Outcome probabilities for one feature vector.
    fn probabilities(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        eval::outcome_probabilities(self.trained()?, &Payload::Classical(x), &self.encoder, &self.scheme).map_err(err)
    }

    /// Mean `<psi|H_x|psi>` over the given set (default: the training set).
    #[pyo3(signature = (features=None, labels=None))]
    fn loss(&self, features: Option<Vec<Vec<f64>>>, labels: Option<Vec<usize>>) -> PyResult<f64> {
        let state = self.trained()?;
        match (features, labels) {
            (Some(f), Some(l)) => trainer::training_loss(state, &to_samples(f, l)?, &self.encoder, &self.scheme),
            (None, None) => trainer::training_loss(state, &self.samples, &self.encoder, &self.scheme),
            _ => return Err(PyValueError::new_err("pass both features and labels, or neither")),
        }
        .map_err(err)
    }

    /// Mean majority-vote accuracy with `k` single-shot votes (odd int or "inf").
    #[pyo3(signature = (features, labels, k=None))]
    fn accuracy(&self, features: Vec<Vec<f64>>, labels: Vec<usize>, k: Option<&Bound<'_, PyAny>>) -> PyResult<f64> {
        let k = match k {
            Some(k) => votes(k)?,
            None => Votes::Finite(1),
        };
        let samples = to_samples(features, labels)?;
        let f = eval::failure_probabilities(self.trained()?, &samples, &self.encoder, &self.scheme).map_err(err)?;
        eval::mean_k_accuracy(&f, k).map_err(err)
    }

    /// Eigenvalue summary of the training-set Hamiltonian.
    fn spectrum<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let hs = py.detach(|| average_hamiltonian(&self.samples, &self.encoder, &self.scheme)).map_err(err)?;
        let report = spectrum(&hs, &default_energy_grid()).map_err(err)?;
        json_to_py(py, &report.summary_json())
    }
}

#[pyfunction]
fn k_accuracy(h: f64, k: &Bound<'_, PyAny>) -> PyResult<f64> {
    eval::k_accuracy(h, votes(k)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n_qubits, n_train, delta=0.05))]
fn generalization_bound(n_qubits: usize, n_train: usize, delta: f64) -> PyResult<f64> {
    eval::generalization_bound(n_qubits, n_train, delta).map_err(err)
}

#[pyfunction]
fn schedule_from_theorem<'py>(
    py: Python<'py>,
    c1: f64,
    c2: f64,
    c3: f64,
    eps: f64,
    g: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = trainer::schedule_from_theorem(c1, c2, c3, eps, g).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("beta", s.beta)?;
    d.set_item("eta", s.eta)?;
    d.set_item("steps", s.steps)?;
    d.set_item("gamma", s.gamma)?;
    d.set_item("c4", s.c4)?;
    Ok(d)
}

/// Runs a numerical check suite and returns one dict per check.
#[pyfunction]
#[pyo3(signature = (suite="all", seed=7))]
fn verify<'py>(py: Python<'py>, suite: &str, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let checks = py.detach(|| qal_core::verify::run_suite(suite, seed)).map_err(err)?;
    checks
        .into_iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("suite", c.suite)?;
            d.set_item("name", c.name)?;
            d.set_item("passed", c.passed)?;
            d.set_item("value", c.value)?;
            d.set_item("threshold", c.threshold)?;
            d.set_item("detail", c.detail)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn qal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPureState>()?;
    m.add_class::<Classifier>()?;
    m.add_function(wrap_pyfunction!(k_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(generalization_bound, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_from_theorem, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("SUITES", qal_core::verify::SUITES.to_vec())?;
    Ok(())
}
