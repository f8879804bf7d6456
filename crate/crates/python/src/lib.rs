//! Python bindings.
//!
//! Functions are passed as spec strings such as `"tent(-1,1)"` or wrapped in
//! [`Phi`]; ambiguity sets come from JSON, a preset name or a list of
//! measures. Domain failures raise `gxlab.GxlabError` whose message starts
//! with the error name.

use gxlab_core::bandit::{self, BanditArms};
use gxlab_core::dynamics::{self, DPConfig, KernelSet, Normalization, PathFunctional};
use gxlab_core::experiments::{self, ExperimentConfig, Preset, VolatilitySpec};
use gxlab_core::gheat::{self, GNormalParams, PDEConfig};
use gxlab_core::{variance, PiecewiseFunction};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(gxlab, GxlabError, PyException);

fn err<E: Into<gxlab_core::Error>>(e: E) -> PyErr {
    GxlabError::new_err(e.into().to_string())
}

fn invalid(msg: String) -> PyErr {
    GxlabError::new_err(format!("InvalidInput: {msg}"))
}

/// A discrete probability measure.
#[pyclass(name = "Measure", module = "gxlab", frozen, from_py_object)]
#[derive(Clone)]
struct PyMeasure(gxlab_core::DiscreteMeasure);

#[pymethods]
impl PyMeasure {
    #[new]
    fn new(atoms: Vec<f64>, weights: Vec<f64>) -> PyResult<Self> {
        gxlab_core::DiscreteMeasure::new(atoms, weights).map(Self).map_err(err)
    }

    #[getter]
    fn atoms(&self) -> Vec<f64> {
        self.0.atoms().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn variance(&self) -> f64 {
        variance::variance_of(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("Measure(atoms={:?}, weights={:?})", self.0.atoms(), self.0.weights())
    }
}

/// A test function, parsed from its spec string.
#[pyclass(name = "Phi", module = "gxlab", frozen, from_py_object)]
#[derive(Clone)]
struct PyPhi(PiecewiseFunction);

#[pymethods]
impl PyPhi {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        PiecewiseFunction::parse(spec).map(Self).map_err(err)
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    fn render(&self) -> String {
        self.0.render()
    }

    fn __repr__(&self) -> String {
        format!("Phi({:?})", self.0.render())
    }
}

#[derive(FromPyObject)]
enum PhiArg {
    Phi(PyPhi),
    Spec(String),
}

impl PhiArg {
    fn resolve(self) -> PyResult<PiecewiseFunction> {
        match self {
            Self::Phi(p) => Ok(p.0),
            Self::Spec(s) => PiecewiseFunction::parse(&s).map_err(err),
        }
    }
}

/// Convex hull of finitely many discrete measures.
#[pyclass(name = "AmbiguitySet", module = "gxlab", frozen, from_py_object)]
#[derive(Clone)]
struct PySet(gxlab_core::AmbiguitySet);

#[pymethods]
impl PySet {
    #[new]
    fn new(extremes: Vec<PyMeasure>) -> PyResult<Self> {
        gxlab_core::AmbiguitySet::new(extremes.into_iter().map(|m| m.0).collect())
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        gxlab_core::AmbiguitySet::from_json(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Preset::parse(name)
            .map(|p| Self(p.ambiguity_set()))
            .ok_or_else(|| invalid(format!("unknown preset `{name}`")))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn extremes(&self) -> Vec<PyMeasure> {
        self.0.extremes().iter().cloned().map(PyMeasure).collect()
    }

    /// `(mu_low, mu_high)`.
    fn mean_bounds(&self) -> (f64, f64) {
        let m = self.0.mean_bounds();
        (m.lower, m.upper)
    }

    /// `(var_low, var_high)`.
    fn variance_bounds(&self) -> (f64, f64) {
        let env = variance::envelope(&self.0);
        (env.lower, env.upper)
    }

    fn upper_expectation(&self, phi: PhiArg) -> PyResult<f64> {
        self.0.upper_expectation(&phi.resolve()?).map_err(err)
    }

    fn lower_expectation(&self, phi: PhiArg) -> PyResult<f64> {
        self.0.lower_expectation(&phi.resolve()?).map_err(err)
    }

    /// Hull member with variance `sigma2`, as `(c, lambda, measure)`.
    fn achieve_variance(&self, sigma2: f64) -> PyResult<(f64, Vec<f64>, PyMeasure)> {
        let got = variance::achieve_variance(&self.0, sigma2).map_err(err)?;
        Ok((got.c, got.lambda.as_slice().to_vec(), PyMeasure(got.measure)))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn grid(state_step: f64, simplex_resolution: f64, pde_dx: f64) -> ExperimentConfig {
    ExperimentConfig {
        state_step,
        simplex_resolution,
        pde_dx,
        ..ExperimentConfig::default()
    }
}

/// Upper (or lower) expectation of `phi` of the normalised sum after `n`
/// steps, by the kernel dynamic program.
#[pyfunction]
#[pyo3(signature = (set, phi, n, normalization="clt_centered", state_step=0.01, simplex_resolution=1.0/64.0, kernels="auto", lower=false))]
#[allow(clippy::too_many_arguments)]
fn dp_expectation(
    py: Python<'_>,
    set: &PySet,
    phi: PhiArg,
    n: usize,
    normalization: &str,
    state_step: f64,
    simplex_resolution: f64,
    kernels: &str,
    lower: bool,
) -> PyResult<f64> {
    let norm =
        Normalization::parse(normalization).ok_or_else(|| invalid(format!("unknown normalization `{normalization}`")))?;
    let kernels = match kernels {
        "auto" => KernelSet::Auto,
        "hull" => KernelSet::Hull,
        "extremes" => KernelSet::Extremes,
        other => return Err(invalid(format!("unknown kernel set `{other}`"))),
    };
    let cfg = DPConfig::new(n, norm)
        .with_state_step(state_step)
        .with_simplex_resolution(simplex_resolution)
        .with_kernels(kernels);
    let f = PathFunctional::Terminal(phi.resolve()?);
    let a = &set.0;
    py.detach(|| {
        if lower {
            dynamics::dp_lower_expectation(a, &f, &cfg)
        } else {
            dynamics::dp_upper_expectation(a, &f, &cfg)
        }
    })
    .map_err(err)
}

/// `E_G[phi(xi)]` for `xi ~ N(0, [sigma2_low, sigma2_high])`.
#[pyfunction]
#[pyo3(signature = (sigma2_low, sigma2_high, phi, dx=0.01))]
fn g_expectation(py: Python<'_>, sigma2_low: f64, sigma2_high: f64, phi: PhiArg, dx: f64) -> PyResult<f64> {
    let p = GNormalParams::new(sigma2_low, sigma2_high).map_err(err)?;
    let phi = phi.resolve()?;
    let cfg = PDEConfig::for_params(&p, dx);
    py.detach(|| gheat::g_expectation(&phi, &p, &cfg)).map_err(err)
}

/// Upper distribution function `V(xi <= x)` of the G-normal law.
#[pyfunction]
fn g_normal_cdf(sigma2_low: f64, sigma2_high: f64, x: f64) -> PyResult<f64> {
    let p = GNormalParams::new(sigma2_low, sigma2_high).map_err(err)?;
    gheat::g_normal_cdf(&p, x).map_err(err)
}

/// `(lower, upper)` bracket for the capacity of `[a, b]`.
#[pyfunction]
#[pyo3(signature = (sigma2_low, sigma2_high, a, b, eps=0.05))]
fn interval_capacity(py: Python<'_>, sigma2_low: f64, sigma2_high: f64, a: f64, b: f64, eps: f64) -> PyResult<(f64, f64)> {
    let p = GNormalParams::new(sigma2_low, sigma2_high).map_err(err)?;
    py.detach(|| gheat::interval_capacity(&p, a, b, eps)).map_err(err)
}

/// Rows `{n, dp_value, limit_value, gap}` of the CLT convergence table.
#[pyfunction]
#[pyo3(signature = (set, phi, n, state_step=0.01, simplex_resolution=1.0/64.0, pde_dx=0.01))]
fn clt_table<'py>(
    py: Python<'py>,
    set: &PySet,
    phi: PhiArg,
    n: Vec<usize>,
    state_step: f64,
    simplex_resolution: f64,
    pde_dx: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let phi = phi.resolve()?;
    let cfg = grid(state_step, simplex_resolution, pde_dx);
    let a = &set.0;
    let rows = py.detach(|| experiments::run_clt(a, &phi, &n, &cfg)).map_err(err)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("n", r.n)?;
            d.set_item("dp_value", r.dp_value)?;
            d.set_item("limit_value", r.limit_value)?;
            d.set_item("gap", r.gap)?;
            Ok(d)
        })
        .collect()
}

/// Exact value of the heavy-tailed family after `n` steps.
#[pyfunction]
#[pyo3(signature = (k_max, n, state_cap=experiments::DEFAULT_STATE_CAP))]
fn counterexample_value(py: Python<'_>, k_max: usize, n: usize, state_cap: usize) -> PyResult<f64> {
    py.detach(|| experiments::counterexample_value(k_max, n, state_cap)).map_err(err)
}

/// `(estimate, stderr)` of `E[phi(S_n)]` under a volatility rule:
/// `("constant", sigma)` or `("bang_bang", threshold)`.
#[pyfunction]
#[pyo3(signature = (set, phi, volatility, n, paths=100_000, seed=20_240_607))]
fn volatility_mc(
    py: Python<'_>,
    set: &PySet,
    phi: PhiArg,
    volatility: (String, f64),
    n: usize,
    paths: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let spec = match volatility.0.as_str() {
        "constant" => VolatilitySpec::Constant(volatility.1),
        "bang_bang" => VolatilitySpec::BangBang(volatility.1),
        other => return Err(invalid(format!("unknown volatility `{other}`"))),
    };
    let phi = phi.resolve()?;
    let a = &set.0;
    let r = py
        .detach(|| experiments::run_volatility_mc(a, spec, &phi, n, paths, seed))
        .map_err(err)?;
    Ok((r.estimate, r.stderr))
}

/// `(round, sum, arm)`.
type DecisionTuple = (usize, f64, String);

/// Optimal value of `phi` of the reward sum over 0/1 strategies, together
/// with the per-state decisions as `(round, sum, arm)` tuples.
#[pyfunction]
#[pyo3(signature = (left, right, n, phi="pwl:0,0;sl=1,sr=1".to_string(), state_cap=bandit::DEFAULT_STATE_CAP))]
fn bandit_strategy_value(
    py: Python<'_>,
    left: PyMeasure,
    right: PyMeasure,
    n: usize,
    phi: String,
    state_cap: usize,
) -> PyResult<(f64, Vec<DecisionTuple>)> {
    let arms = BanditArms::new(left.0, right.0);
    let f = PathFunctional::Terminal(PiecewiseFunction::parse(&phi).map_err(err)?);
    let v = py
        .detach(|| bandit::optimal_strategy_value(&arms, n, &f, state_cap))
        .map_err(err)?;
    let decisions = v.decisions.into_iter().map(|d| (d.round, d.sum, d.arm.to_string())).collect();
    Ok((v.value, decisions))
}

#[pymodule]
fn gxlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GxlabError", m.py().get_type::<GxlabError>())?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyPhi>()?;
    m.add_class::<PySet>()?;
    m.add_function(wrap_pyfunction!(dp_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(g_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(g_normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(interval_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(clt_table, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_value, m)?)?;
    m.add_function(wrap_pyfunction!(volatility_mc, m)?)?;
    m.add_function(wrap_pyfunction!(bandit_strategy_value, m)?)?;
    Ok(())
}
