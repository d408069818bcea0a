//! Python bindings for `irsopt`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use irsopt::channel::{ChannelModel, EffectiveChannel, IrsChannel};
use irsopt::experiment::{self, LoadedScenario, RunOptions, SeedSpec};
use irsopt::irs::{self, VaractorCircuit};
use irsopt::optimizer::{izosga_run, lemma3_check, OptimizerConfig};
use irsopt::oracle::{self, OracleBudget};
use irsopt::rng::stream;
use irsopt::utility::{Precoder, Utility};

fn to_py(e: irsopt::Error) -> PyErr {
    match e {
        irsopt::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A validated scenario file with its surface model and parameter box.
#[pyclass(name = "Scenario", module = "pyirsopt", frozen)]
struct PyScenario {
    inner: LoadedScenario,
    model: IrsChannel,
}

impl PyScenario {
    fn wrap(inner: LoadedScenario) -> PyResult<Self> {
        let model = IrsChannel::new(inner.scenario.clone(), inner.irs.clone()).map_err(to_py)?;
        Ok(Self { inner, model })
    }

    fn channel(&self, h: Vec<Complex64>) -> PyResult<EffectiveChannel> {
        EffectiveChannel::new(self.model.users(), self.model.antennas(), h).map_err(to_py)
    }

    fn precoder(&self, w: Vec<Complex64>) -> PyResult<Precoder> {
        let (k, m) = (self.model.users(), self.model.antennas());
        if w.len() != k * m {
            return Err(PyValueError::new_err(format!("precoder needs {} entries, got {}", k * m, w.len())));
        }
        Ok(Precoder { users: k, antennas: m, data: w })
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::wrap(experiment::load_scenario(path).map_err(to_py)?)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Self::wrap(experiment::config::parse_scenario(text).map_err(to_py)?)
    }

    /// Same system with the surface model switched to `"ideal"` or `"varactor"`.
    fn with_kind(&self, kind: &str) -> PyResult<Self> {
        let kind = match kind {
            "ideal" => irs::IrsKind::Ideal,
            "varactor" => irs::IrsKind::Varactor,
            other => return Err(PyValueError::new_err(format!("unknown surface kind '{other}'"))),
        };
        Self::wrap(self.inner.with_kind(kind).map_err(to_py)?)
    }

    #[getter]
    fn tx_antennas(&self) -> usize {
        self.inner.scenario.tx_antennas
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.scenario.users
    }

    #[getter]
    fn irs_elements(&self) -> usize {
        self.inner.scenario.irs_elements
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.initial.kind.to_string()
    }

    #[getter]
    fn parameter_dim(&self) -> usize {
        self.model.parameter_dim()
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.inner.bounds.lower.clone()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.inner.bounds.upper.clone()
    }

    #[getter]
    fn initial_theta(&self) -> Vec<f64> {
        self.inner.initial.values.clone()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint.clone()
    }

    fn echo(&self) -> String {
        self.inner.echo()
    }

    fn project(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.bounds.project(&theta).map_err(to_py)
    }

    fn reflection(&self, theta: Vec<f64>) -> PyResult<Vec<Complex64>> {
        self.inner.irs.reflection(&theta, self.inner.scenario.irs_elements).map_err(to_py)
    }

    /// Effective channel `H(θ, ω)` for the realization drawn from `seed`, user-major.
    fn effective_channel(&self, theta: Vec<f64>, seed: u64) -> PyResult<Vec<Complex64>> {
        let real = self.model.sample(&mut stream(seed));
        Ok(self.model.compose(&real, &theta).map_err(to_py)?.data)
    }

    fn sumrate(&self, h: Vec<Complex64>, w: Vec<Complex64>) -> PyResult<f64> {
        let h = self.channel(h)?;
        let w = self.precoder(w)?;
        self.inner.scenario.rate_model().value(&w, &h).map_err(to_py)
    }

    /// Runs WMMSE; returns the precoder and the per-iteration sumrates.
    #[pyo3(signature = (h, iterations, warm_start=None))]
    fn wmmse(&self, h: Vec<Complex64>, iterations: u32, warm_start: Option<Vec<Complex64>>) -> PyResult<(Vec<Complex64>, Vec<f64>)> {
        let h = self.channel(h)?;
        let warm = warm_start.map(|w| self.precoder(w)).transpose()?;
        let rate = self.inner.scenario.rate_model();
        let (w, trace) = oracle::wmmse(&h, &rate, &OracleBudget::iterations(iterations), warm.as_ref()).map_err(to_py)?;
        Ok((w.data, trace.sumrate_per_iteration))
    }

    /// One optimizer run with a constant budget; returns a dict of traces.
    #[pyo3(signature = (iterations, step_size, smoothing, budget, seed, theta0=None, warm_start=false))]
    #[allow(clippy::too_many_arguments)]
    fn izosga_run<'py>(
        &self,
        py: Python<'py>,
        iterations: usize,
        step_size: f64,
        smoothing: f64,
        budget: u32,
        seed: u64,
        theta0: Option<Vec<f64>>,
        warm_start: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut config = OptimizerConfig::new(iterations, step_size, smoothing, budget, seed);
        config.warm_start = warm_start;
        let theta0 = theta0.unwrap_or_else(|| self.inner.initial.values.clone());
        let rate = self.inner.scenario.rate_model();
        let run = py
            .detach(|| izosga_run(&self.model, &rate, &self.inner.bounds, &config, &theta0))
            .map_err(to_py)?;
        let (bound, satisfied) = lemma3_check(&run);
        let out = PyDict::new(py);
        out.set_item("sumrate_curve", &run.sumrate_curve)?;
        out.set_item("budget_curve", &run.budget_curve)?;
        out.set_item("returned_index", run.returned_index)?;
        out.set_item("returned_theta", &run.returned_theta)?;
        out.set_item("final_theta", &run.final_theta)?;
        out.set_item("channel_compositions", run.channel_compositions)?;
        out.set_item("empirical_bf", run.diagnostics.empirical_bf)?;
        out.set_item("empirical_lh0", run.diagnostics.empirical_lh0)?;
        out.set_item("mean_sq_grad", run.diagnostics.mean_sq_grad)?;
        out.set_item("lemma3_bound", bound)?;
        out.set_item("lemma3_satisfied", satisfied)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(M={}, K={}, S={}, kind={})",
            self.inner.scenario.tx_antennas,
            self.inner.scenario.users,
            self.inner.scenario.irs_elements,
            self.inner.initial.kind
        )
    }
}

/// Reflection coefficients of the default varactor element at the given capacitances (pF).
#[pyfunction]
fn reflection_varactor(capacitance_pf: Vec<f64>) -> PyResult<Vec<Complex64>> {
    irs::reflection_varactor(&capacitance_pf, &VaractorCircuit::default()).map_err(to_py)
}

#[pyfunction]
fn reflection_ideal(amplitudes: Vec<f64>, phases: Vec<f64>) -> PyResult<Vec<Complex64>> {
    irs::reflection_ideal(&amplitudes, &phases).map_err(to_py)
}

#[pyfunction]
fn step_size_theorem3(delta_f: f64, c2: f64, rho: f64, iterations: usize) -> f64 {
    irsopt::optimizer::step_size_theorem3(delta_f, c2, rho, iterations)
}

#[pyfunction]
fn smoothing_rule(effective_dim: usize, iterations: usize) -> f64 {
    irsopt::optimizer::smoothing_rule(effective_dim, iterations)
}

/// Runs an experiment file and returns its summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (config, out=None, seeds=None, workers=0, svg=false))]
fn run_experiment(py: Python<'_>, config: PathBuf, out: Option<PathBuf>, seeds: Option<String>, workers: usize, svg: bool) -> PyResult<String> {
    let mut spec = experiment::load_experiment(&config).map_err(to_py)?;
    if let Some(seeds) = seeds {
        spec.set_seeds(SeedSpec::parse(&seeds).map_err(to_py)?).map_err(to_py)?;
    }
    if let Some(out) = out {
        spec.set_output_dir(out);
    }
    let options = RunOptions { workers, svg };
    let outcome = py.detach(|| experiment::run_experiment(&spec, &options)).map_err(to_py)?;
    serde_json::to_string(&outcome.summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pyirsopt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(reflection_varactor, m)?)?;
    m.add_function(wrap_pyfunction!(reflection_ideal, m)?)?;
    m.add_function(wrap_pyfunction!(step_size_theorem3, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_rule, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
