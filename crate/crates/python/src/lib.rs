//! Python bindings: environments, policies, learners, offline extraction and experiments.
//!
//! Arrays cross the boundary as nested lists indexed `[h][s][a]` (and
//! `[h][s][a][s']` for transitions).

use std::path::PathBuf;

use ndarray::{Array3, Array4};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stepmix::harness::{emit_summary_json, ConfigFile};
use stepmix::record::emit_csv;
use stepmix::textfmt;

fn to_py(err: stepmix::Error) -> PyErr {
    match err {
        stepmix::Error::Io { .. } => PyOSError::new_err(err.to_string()),
        stepmix::Error::Invariant(_) => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn array3(nested: Vec<Vec<Vec<f64>>>) -> PyResult<Array3<f64>> {
    let (h, s, a) = (
        nested.len(),
        nested.first().map_or(0, Vec::len),
        nested.first().and_then(|x| x.first()).map_or(0, Vec::len),
    );
    let flat: Vec<f64> = nested.into_iter().flatten().flatten().collect();
    Array3::from_shape_vec((h, s, a), flat).map_err(|_| PyValueError::new_err("ragged nested list"))
}

fn array4(nested: Vec<Vec<Vec<Vec<f64>>>>) -> PyResult<Array4<f64>> {
    let h = nested.len();
    let s = nested.first().map_or(0, Vec::len);
    let a = nested.first().and_then(|x| x.first()).map_or(0, Vec::len);
    let s2 = nested
        .first()
        .and_then(|x| x.first())
        .and_then(|x| x.first())
        .map_or(0, Vec::len);
    let flat: Vec<f64> = nested.into_iter().flatten().flatten().flatten().collect();
    Array4::from_shape_vec((h, s, a, s2), flat).map_err(|_| PyValueError::new_err("ragged nested list"))
}

fn nested3(x: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    x.outer_iter()
        .map(|m| m.outer_iter().map(|r| r.to_vec()).collect())
        .collect()
}

/// A finite-horizon tabular MDP with a fixed start state.
#[pyclass(name = "TabularMdp", module = "stepmix_rs", frozen)]
struct PyMdp {
    inner: stepmix::TabularMdp,
}

#[pymethods]
impl PyMdp {
    #[new]
    #[pyo3(signature = (transitions, rewards, start_state=0))]
    fn new(transitions: Vec<Vec<Vec<Vec<f64>>>>, rewards: Vec<Vec<Vec<f64>>>, start_state: usize) -> PyResult<Self> {
        let inner = stepmix::TabularMdp::new(array4(transitions)?, array3(rewards)?, start_state).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Random environment: rewards uniform on [0, 1], transition rows uniform on the simplex.
    #[staticmethod]
    fn random(states: usize, actions: usize, horizon: usize, seed: u64) -> PyResult<Self> {
        let inner = stepmix::generate_random_mdp(states, actions, horizon, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: textfmt::load_mdp(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        textfmt::save_mdp(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn start_state(&self) -> usize {
        self.inner.start_state()
    }

    fn rewards(&self) -> Vec<Vec<Vec<f64>>> {
        nested3(self.inner.rewards())
    }

    fn transitions(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        self.inner
            .transitions()
            .outer_iter()
            .map(|m| {
                m.outer_iter()
                    .map(|r| r.outer_iter().map(|row| row.to_vec()).collect())
                    .collect()
            })
            .collect()
    }

    /// `(V*, π*)` with ties broken toward the lowest action index.
    fn solve_optimal(&self) -> (f64, PyPolicy) {
        let (values, policy) = stepmix::solve_optimal(&self.inner);
        (values.initial(self.inner.start_state()), PyPolicy { inner: policy })
    }

    fn boltzmann(&self, eta: f64) -> PyResult<PyPolicy> {
        Ok(PyPolicy {
            inner: stepmix::boltzmann_baseline(&self.inner, eta).map_err(to_py)?,
        })
    }

    /// Exact expected return of `policy` from the start state.
    fn value(&self, policy: &PyPolicy) -> PyResult<f64> {
        stepmix::expected_return(&self.inner, &policy.inner).map_err(to_py)
    }

    fn occupancy(&self, policy: &PyPolicy) -> PyResult<Vec<Vec<Vec<f64>>>> {
        Ok(nested3(
            &stepmix::occupancy_measure(&self.inner, &policy.inner).map_err(to_py)?.d,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "TabularMdp(states={}, actions={}, horizon={})",
            self.states(),
            self.actions(),
            self.horizon()
        )
    }
}

/// A non-stationary stochastic policy `π_h(a | s)`.
#[pyclass(name = "Policy", module = "stepmix_rs", frozen)]
struct PyPolicy {
    inner: stepmix::StochasticPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(probs: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        Ok(Self {
            inner: stepmix::StochasticPolicy::new(array3(probs)?).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn uniform(states: usize, actions: usize, horizon: usize) -> PyResult<Self> {
        let shape = stepmix::Shape::new(states, actions, horizon).map_err(to_py)?;
        Ok(Self {
            inner: stepmix::StochasticPolicy::uniform(shape),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: textfmt::load_policy(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        textfmt::save_policy(&path, &self.inner).map_err(to_py)
    }

    fn probs(&self) -> Vec<Vec<Vec<f64>>> {
        nested3(self.inner.probs())
    }

    /// `ρ·self + (1 − ρ)·other` at every step.
    fn step_mix(&self, other: &PyPolicy, rho: f64) -> PyResult<PyPolicy> {
        Ok(PyPolicy {
            inner: stepmix::step_mix(&self.inner, &other.inner, rho).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let s = self.inner.shape();
        format!(
            "Policy(states={}, actions={}, horizon={})",
            s.states, s.actions, s.horizon
        )
    }
}

fn record_dict<'py>(py: Python<'py>, r: &stepmix::EpisodeRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("trial", r.trial)?;
    d.set_item("episode", r.episode)?;
    d.set_item("algorithm", r.algorithm.as_str())?;
    d.set_item("kind", r.kind.as_str())?;
    d.set_item("rho", r.rho)?;
    d.set_item("h_k", r.h_k)?;
    d.set_item("value", r.value)?;
    d.set_item("mixture_value", r.mixture_value)?;
    d.set_item("violation", r.violation)?;
    d.set_item("cum_regret", r.cum_regret)?;
    Ok(d)
}

/// Runs one learner for `episodes` episodes and returns its per-episode records.
#[pyfunction]
#[pyo3(signature = (algorithm, mdp, baseline, gamma, episodes, delta=0.1, bonus_scale=1.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_algorithm<'py>(
    py: Python<'py>,
    algorithm: &str,
    mdp: &PyMdp,
    baseline: &PyPolicy,
    gamma: f64,
    episodes: usize,
    delta: f64,
    bonus_scale: f64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let alg: stepmix::Algorithm = algorithm.parse().map_err(to_py)?;
    let cfg = stepmix::AgentConfig::new(gamma, delta, bonus_scale, baseline.inner.clone()).map_err(to_py)?;
    let mdp = &mdp.inner;
    let run = py
        .detach(|| {
            let mut rollout = ChaCha8Rng::seed_from_u64(seed);
            let mut coin = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            stepmix::run_algorithm(alg, mdp, &cfg, episodes, &mut rollout, &mut coin)
        })
        .map_err(to_py)?;
    run.records().map(|r| record_dict(py, r)).collect()
}

/// Collects `n` trajectories under `behavior` and returns the VI-LCB policy.
#[pyfunction]
#[pyo3(signature = (mdp, behavior, n, delta=0.1, c=1.0, seed=0))]
fn vi_lcb(mdp: &PyMdp, behavior: &PyPolicy, n: usize, delta: f64, c: f64, seed: u64) -> PyResult<PyPolicy> {
    let cfg = stepmix::OfflineConfig::new(delta, c).map_err(to_py)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = stepmix::collect_offline(&mdp.inner, &behavior.inner, n, &mut rng).map_err(to_py)?;
    let policy = stepmix::vi_lcb(&data, mdp.inner.shape(), mdp.inner.rewards(), &cfg).map_err(to_py)?;
    Ok(PyPolicy { inner: policy })
}

#[pyfunction]
#[pyo3(signature = (states, actions, horizon, v_mu, gamma, delta=0.1, c=1.0))]
fn required_offline_samples(
    states: usize,
    actions: usize,
    horizon: usize,
    v_mu: f64,
    gamma: f64,
    delta: f64,
    c: f64,
) -> PyResult<u64> {
    let cfg = stepmix::OfflineConfig::new(delta, c).map_err(to_py)?;
    stepmix::required_offline_samples(states, actions, horizon, v_mu, gamma, &cfg).map_err(to_py)
}

/// Records and summary of a multi-trial experiment.
#[pyclass(name = "ExperimentResult", module = "stepmix_rs", frozen)]
struct PyExperimentResult {
    inner: stepmix::ExperimentResult,
}

#[pymethods]
impl PyExperimentResult {
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.logs.iter().map(|l| record_dict(py, &l.record)).collect()
    }

    /// The summary document as JSON text.
    fn summary_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        emit_csv(&path, &self.inner.records()).map_err(to_py)
    }

    fn write_summary(&self, path: PathBuf) -> PyResult<()> {
        emit_summary_json(&path, &self.inner.summary).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.logs.len()
    }
}

/// Runs an experiment described by configuration text in the CLI's TOML format.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<PyExperimentResult> {
    let cfg = ConfigFile::from_toml_str(config)
        .and_then(|f| f.resolve())
        .map_err(to_py)?;
    let inner = py.detach(|| stepmix::run_experiment(&cfg)).map_err(to_py)?;
    Ok(PyExperimentResult { inner })
}

#[pymodule]
fn stepmix_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyExperimentResult>()?;
    m.add_function(wrap_pyfunction!(run_algorithm, m)?)?;
    m.add_function(wrap_pyfunction!(vi_lcb, m)?)?;
    m.add_function(wrap_pyfunction!(required_offline_samples, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
