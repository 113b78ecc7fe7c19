//! Python bindings: `import chainlab`.
//!
//! Points are `(x, y, theta)` tuples. Structured results (shadows, closing
//! results, run records) come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use chainlab_core::center_lift::{lift_chain, reorder_chain, LiftedChain};
use chainlab_core::center_shadowing::{center_shadow, center_shadow_periodic, measure_lipschitz_L, CenterShadow};
use chainlab_core::chain_engine::{random_pseudo_orbit, ChainGraph, PseudoOrbit};
use chainlab_core::closing_solver::{
    displacement_profile, find_closing_tau, min_center_push, CenterVectorField, PerturbationFamily, PUSH_SAMPLES,
};
use chainlab_core::lab::{run_scenario, ScenarioFile};
use chainlab_core::models::{FiberTerm, PresetLibrary, SkewProductSystem, TorusPoint};

type Point = (f64, f64, f64);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(p: Point) -> TorusPoint {
    TorusPoint::new(p.0, p.1, p.2)
}

fn tuple(p: &TorusPoint) -> Point {
    (p.base[0], p.base[1], p.fiber)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn library(config: Option<&str>) -> PyResult<PresetLibrary> {
    let mut lib = PresetLibrary::builtin();
    if let Some(text) = config {
        lib.merge(PresetLibrary::parse(text).map_err(err)?);
    }
    Ok(lib)
}

/// `(v, θ) ↦ (A v, θ + φ(v) + (a/2π) sin 2πθ)` on `T^3`.
#[pyclass(name = "System", frozen)]
struct PySystem {
    inner: SkewProductSystem,
    tilt: f64,
}

#[pymethods]
impl PySystem {
    /// `terms` is a list of `(m1, m2, amplitude)`; `tilt` is the base
    /// unstable component of the perturbing field.
    #[new]
    #[pyo3(signature = (matrix, terms, nonlinearity, tilt = 0.0))]
    fn new(matrix: [[i64; 2]; 2], terms: Vec<(i64, i64, f64)>, nonlinearity: f64, tilt: f64) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(m1, m2, amplitude)| FiberTerm {
                freq: [m1, m2],
                amplitude,
            })
            .collect();
        let inner = SkewProductSystem::new(matrix, terms, nonlinearity).map_err(err)?;
        Ok(Self { inner, tilt })
    }

    /// A shipped preset, or one from the TOML text `config`.
    #[staticmethod]
    #[pyo3(signature = (id, config = None))]
    fn preset(id: &str, config: Option<&str>) -> PyResult<Self> {
        let lib = library(config)?;
        let p = lib.get(id).map_err(err)?;
        Ok(Self {
            inner: p.system.clone(),
            tilt: p.field_tilt,
        })
    }

    #[staticmethod]
    fn preset_ids() -> Vec<String> {
        PresetLibrary::builtin().ids().map(str::to_string).collect()
    }

    fn apply(&self, p: Point) -> Point {
        tuple(&self.inner.apply(&point(p)))
    }

    fn apply_inverse(&self, p: Point) -> PyResult<Point> {
        Ok(tuple(&self.inner.apply_inverse(&point(p)).map_err(err)?))
    }

    #[getter]
    fn lambda_s(&self) -> f64 {
        self.inner.eigen().lambda_s
    }

    #[getter]
    fn lambda_u(&self) -> f64 {
        self.inner.eigen().lambda_u
    }

    #[getter]
    fn nonlinearity(&self) -> f64 {
        self.inner.nonlinearity()
    }

    #[getter]
    fn tilt(&self) -> f64 {
        self.tilt
    }

    /// `L_b = 1/(1 − λ_s) + 1/(1 − 1/λ_u)`.
    fn base_shadowing_constant(&self) -> f64 {
        self.inner.eigen().shadowing_constant()
    }

    fn __repr__(&self) -> String {
        format!(
            "System(matrix={:?}, nonlinearity={}, tilt={})",
            self.inner.matrix(),
            self.inner.nonlinearity(),
            self.tilt
        )
    }
}

impl PySystem {
    fn family(&self) -> PerturbationFamily {
        PerturbationFamily::new(self.inner.clone(), CenterVectorField { tilt: self.tilt })
    }
}

#[pyclass(name = "PseudoOrbit", frozen)]
struct PyPseudoOrbit {
    inner: PseudoOrbit,
}

#[pymethods]
impl PyPseudoOrbit {
    /// Checks `d(f(x_i), x_{i+1}) < epsilon` for every step.
    #[new]
    fn new(system: &PySystem, points: Vec<Point>, epsilon: f64) -> PyResult<Self> {
        let points = points.into_iter().map(point).collect();
        let inner = PseudoOrbit::new(&system.inner, points, epsilon).map_err(err)?;
        Ok(Self { inner })
    }

    /// Seeded random pseudo-orbit with jumps shorter than `delta`.
    #[staticmethod]
    #[pyo3(signature = (system, start, steps, delta, seed, jump_probability = 1.0))]
    fn random(system: &PySystem, start: Point, steps: usize, delta: f64, seed: u64, jump_probability: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            inner: random_pseudo_orbit(&system.inner, &mut rng, point(start), steps, delta, jump_probability),
        }
    }

    #[getter]
    fn points(&self) -> Vec<Point> {
        self.inner.points().iter().map(tuple).collect()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn max_jump(&self, system: &PySystem) -> f64 {
        self.inner.max_jump(&system.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.points().len()
    }
}

/// Box graph of a system at a grid resolution.
#[pyclass(name = "ChainGraph", frozen)]
struct PyChainGraph {
    inner: ChainGraph,
}

#[pymethods]
impl PyChainGraph {
    #[new]
    fn new(system: &PySystem, resolution: u32, epsilon: f64) -> PyResult<Self> {
        let inner = ChainGraph::build(&system.inner, resolution, epsilon).map_err(err)?;
        Ok(Self { inner })
    }

    /// Certified chain recurrent classes, each a list of box indices.
    fn classes(&self) -> Vec<Vec<u32>> {
        self.inner
            .chain_recurrent_classes()
            .into_iter()
            .map(|c| c.boxes)
            .collect()
    }

    /// A pseudo-orbit from `x` to `y` through the graph, if one exists.
    fn chain_attainable(&self, x: Point, y: Point) -> Option<PyPseudoOrbit> {
        self.inner
            .chain_attainable(&point(x), &point(y))
            .map(|inner| PyPseudoOrbit { inner })
    }

    #[getter]
    fn witness_bound(&self) -> f64 {
        self.inner.witness_bound()
    }

    #[getter]
    fn box_count(&self) -> usize {
        self.inner.grid().box_count()
    }
}

/// Center pseudo-orbit shadowing a pseudo-orbit.
#[pyclass(name = "CenterShadow", frozen)]
struct PyCenterShadow {
    inner: CenterShadow,
}

#[pymethods]
impl PyCenterShadow {
    #[getter]
    fn points(&self) -> Vec<Point> {
        self.inner.chain.points().iter().map(tuple).collect()
    }

    #[getter]
    fn jump_times(&self) -> Vec<f64> {
        self.inner.chain.jump_times().to_vec()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.chain.epsilon()
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz
    }

    #[getter]
    fn measured_ratio(&self) -> f64 {
        self.inner.measured_ratio
    }
}

#[pyfunction]
#[pyo3(signature = (system, orbit, periodic = false))]
fn shadow(system: &PySystem, orbit: &PyPseudoOrbit, periodic: bool) -> PyResult<PyCenterShadow> {
    let inner = if periodic {
        center_shadow_periodic(&system.inner, &orbit.inner)
    } else {
        center_shadow(&system.inner, &orbit.inner)
    }
    .map_err(err)?;
    Ok(PyCenterShadow { inner })
}

/// Lift of a center shadow to the center lines.
#[pyfunction]
fn lift(system: &PySystem, shadow: &PyCenterShadow) -> PyResult<PyLiftedChain> {
    let inner = lift_chain(&system.inner, &shadow.inner.chain).map_err(err)?;
    Ok(PyLiftedChain { inner })
}

/// Center pseudo-orbit on the lifted center lines.
#[pyclass(name = "LiftedChain", frozen)]
struct PyLiftedChain {
    inner: LiftedChain,
}

#[pymethods]
impl PyLiftedChain {
    #[getter]
    fn jump_times(&self) -> Vec<f64> {
        self.inner.jump_times()
    }

    #[getter]
    fn offsets(&self) -> Vec<f64> {
        self.inner.offsets.clone()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn with_epsilon(&self, epsilon: f64) -> PyResult<Self> {
        let inner = self.inner.clone().with_epsilon(epsilon).map_err(err)?;
        Ok(Self { inner })
    }

    /// Rewrites the chain so all jump times share one sign; returns the new
    /// chain and the rewriting report.
    fn reorder<'py>(&self, py: Python<'py>) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let (inner, report) = reorder_chain(&self.inner).map_err(err)?;
        Ok((Self { inner }, to_py(py, &report)?))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = LiftedChain::from_json(text).map_err(err)?;
        Ok(Self { inner })
    }
}

/// Closing parameter `τ_k` for an ordered lifted chain.
#[pyfunction]
fn close<'py>(py: Python<'py>, system: &PySystem, lifted: &PyLiftedChain, k: u32) -> PyResult<Bound<'py, PyAny>> {
    let result = find_closing_tau(&system.family(), &lifted.inner, k).map_err(err)?;
    to_py(py, &result)
}

/// `[(τ, D(τ))]` on an evenly spaced grid of `[0, tau_max]`.
#[pyfunction]
fn displacement(system: &PySystem, lifted: &PyLiftedChain, tau_max: f64, points: usize) -> PyResult<Vec<(f64, f64)>> {
    displacement_profile(&system.family(), &lifted.inner, tau_max, points).map_err(err)
}

/// Sampled lower bound `Δ_τ` of the center push.
#[pyfunction]
fn center_push(system: &PySystem, tau: f64) -> PyResult<f64> {
    Ok(min_center_push(&system.family(), tau, PUSH_SAMPLES).map_err(err)?.delta)
}

#[pyfunction]
#[pyo3(signature = (system, trials, eps_list, jump_probability = 1.0, seed = 0))]
fn measure_lipschitz<'py>(
    py: Python<'py>,
    system: &PySystem,
    trials: usize,
    eps_list: Vec<f64>,
    jump_probability: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let table = measure_lipschitz_L(&system.inner, trials, &eps_list, jump_probability, seed).map_err(err)?;
    to_py(py, &table)
}

/// Runs every `[[scenario]]` of the TOML text; `[preset.<id>]` tables in
/// the same text extend the shipped presets.
#[pyfunction]
fn run_scenarios<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let lib = library(Some(config))?;
    let file = ScenarioFile::parse(config).map_err(err)?;
    file.scenario
        .iter()
        .map(|s| {
            let record = run_scenario(&lib, s).map_err(err)?;
            to_py(py, &record)
        })
        .collect()
}

#[pymodule]
fn chainlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyPseudoOrbit>()?;
    m.add_class::<PyChainGraph>()?;
    m.add_class::<PyCenterShadow>()?;
    m.add_class::<PyLiftedChain>()?;
    m.add_function(wrap_pyfunction!(shadow, m)?)?;
    m.add_function(wrap_pyfunction!(lift, m)?)?;
    m.add_function(wrap_pyfunction!(close, m)?)?;
    m.add_function(wrap_pyfunction!(displacement, m)?)?;
    m.add_function(wrap_pyfunction!(center_push, m)?)?;
    m.add_function(wrap_pyfunction!(measure_lipschitz, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenarios, m)?)?;
    Ok(())
}
