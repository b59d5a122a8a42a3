//! Python bindings: genotypes, worlds, controllers, evolution, diagnosis
//! and the experiment matrix.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use evobot_core::config::Config;
use evobot_core::controller::{self as ctl, FailureCase, FailureInjection, Topology};
use evobot_core::estimation::{self, reference_settings, run_reference, Observation, SimParams};
use evobot_core::evolution::{evolve as ga, random_weights, Genome};
use evobot_core::experiments::run_matrix;
use evobot_core::fitness::{run_trial, FitnessConfig, TrialResult};
use evobot_core::genotype;
use evobot_core::trace::TraceMeta;
use evobot_core::world::{self as wd, RobotBody, StepConfig, TerrainKind};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn failure_case(name: &str) -> PyResult<FailureCase> {
    name.parse().map_err(value_err)
}

/// Load a TOML config (empty means defaults) and apply overrides.
fn config(text: Option<&str>, seed: Option<u64>, generations: Option<usize>, pop_size: Option<usize>) -> PyResult<Config> {
    let mut cfg = Config::from_toml(text.unwrap_or("")).map_err(value_err)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    if let Some(g) = generations {
        cfg.evolution.generations = g;
    }
    if let Some(p) = pop_size {
        cfg.evolution.pop_size = p;
    }
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Validated genotype text.
#[pyclass(name = "Genotype", module = "evobot", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGenotype(genotype::Genotype);

#[pymethods]
impl PyGenotype {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        genotype::Genotype::new(text).map(PyGenotype).map_err(value_err)
    }

    #[staticmethod]
    fn khepera() -> Self {
        PyGenotype(genotype::Genotype::new(genotype::KHEPERA_GENOTYPE).expect("built-in genotype parses"))
    }

    #[getter]
    fn text(&self) -> &str {
        self.0.as_str()
    }

    /// Canonical text of the same body plan.
    fn normalized(&self) -> PyResult<String> {
        genotype::serialize(&self.0.body_plan()).map(|g| g.as_str().to_string()).map_err(runtime_err)
    }

    /// Part, joint and neuron counts.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let bp = self.0.body_plan();
        let d = PyDict::new(py);
        d.set_item("parts", bp.parts.len())?;
        d.set_item("joints", bp.joints.len())?;
        d.set_item("neurons", bp.neurons.len())?;
        d.set_item("connections", bp.connections.len())?;
        d.set_item("touch", bp.count_kind(genotype::NeuronKind::Touch))?;
        d.set_item("motor", bp.count_kind(genotype::NeuronKind::Motor))?;
        Ok(d)
    }

    fn isomorphic(&self, other: &PyGenotype) -> bool {
        self.0.body_plan().is_isomorphic(&other.0.body_plan())
    }

    fn mutate(&self, seed: u64) -> Self {
        PyGenotype(genotype::mutate(&self.0, &genotype::MutationRates::default(), seed))
    }

    fn crossover(&self, other: &PyGenotype, seed: u64) -> Self {
        PyGenotype(genotype::crossover(&self.0, &other.0, seed))
    }

    fn __str__(&self) -> &str {
        self.0.as_str()
    }

    fn __repr__(&self) -> String {
        format!("Genotype({:?})", self.0.as_str())
    }
}

/// Arena with terrain, obstacles and a target.
#[pyclass(name = "World", module = "evobot", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWorld(wd::World);

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (terrain="flat", obstacles=0, seed=0))]
    fn new(terrain: &str, obstacles: usize, seed: u64) -> PyResult<Self> {
        let kind: TerrainKind = terrain.parse().map_err(value_err)?;
        wd::make_world(kind, obstacles, seed).map(PyWorld).map_err(value_err)
    }

    #[getter]
    fn terrain(&self) -> &'static str {
        self.0.terrain.kind.name()
    }

    /// `(x, y, radius)` per obstacle.
    #[getter]
    fn obstacles(&self) -> Vec<(f64, f64, f64)> {
        self.0.obstacles.iter().map(|o| (o.center[0], o.center[1], o.radius)).collect()
    }

    #[getter]
    fn target(&self) -> (f64, f64, f64) {
        let t = self.0.target;
        (t.center[0], t.center[1], t.radius)
    }

    /// Start pose `(x, y, heading)` for corner `k` (taken modulo 4).
    fn corner(&self, k: usize) -> (f64, f64, f64) {
        let s = self.0.corner_start(k, &RobotBody::default());
        (s.x, s.y, s.heading)
    }
}

fn trial_dict<'py>(py: Python<'py>, r: &TrialResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("fitness", r.fitness)?;
    d.set_item("rotations_l", r.rotations_left)?;
    d.set_item("rotations_r", r.rotations_right)?;
    d.set_item("reached", r.reached)?;
    d.set_item("steps", r.steps_used)?;
    d.set_item("sensor_performance", r.sensor_performance)?;
    d.set_item("penalty_steps", r.penalty_steps)?;
    Ok(d)
}

/// Layered neural controller.
#[pyclass(name = "Controller", module = "evobot", skip_from_py_object)]
#[derive(Clone)]
struct PyController(ctl::Controller);

#[pymethods]
impl PyController {
    #[staticmethod]
    #[pyo3(signature = (hidden=4, seed=0))]
    fn random(hidden: usize, seed: u64) -> Self {
        PyController(ctl::Controller::random(Topology::layered(hidden), 1.0, seed))
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        ctl::Controller::from_text(text).map(PyController).map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.0.topology().n_hidden()
    }

    /// One target-reaching trial from a corner, optionally with an injected
    /// failure.
    #[pyo3(signature = (world, corner=0, seed=0, failure=None, severity=0.5, onset=0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        world: &PyWorld,
        corner: usize,
        seed: u64,
        failure: Option<&str>,
        severity: f64,
        onset: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (r, _) = self.run(world, corner, seed, failure, severity, onset)?;
        trial_dict(py, &r)
    }

    /// `(x, y)` per step of the same trial `evaluate` runs.
    #[pyo3(signature = (world, corner=0, seed=0, failure=None, severity=0.5, onset=0))]
    fn trajectory(
        &self,
        world: &PyWorld,
        corner: usize,
        seed: u64,
        failure: Option<&str>,
        severity: f64,
        onset: usize,
    ) -> PyResult<Vec<(f64, f64)>> {
        Ok(self.run(world, corner, seed, failure, severity, onset)?.1)
    }
}

impl PyController {
    fn run(
        &self,
        world: &PyWorld,
        corner: usize,
        seed: u64,
        failure: Option<&str>,
        severity: f64,
        onset: usize,
    ) -> PyResult<(TrialResult, Vec<(f64, f64)>)> {
        let mut c = self.0.clone();
        if let Some(name) = failure {
            let f = FailureInjection::new(failure_case(name)?, onset, severity, seed);
            f.validate().map_err(value_err)?;
            c.failure = Some(f);
        }
        let body = RobotBody::default();
        let start = world.0.corner_start(corner, &body);
        let mut path = vec![(start.x, start.y)];
        let r = run_trial(&world.0, &body, &mut c, &SimParams::ideal(), &FitnessConfig::default(), &start, seed, |s| {
            path.push((s.next.x, s.next.y))
        })
        .map_err(value_err)?;
        Ok((r, path))
    }
}

/// Evolve a controller for the config's `[world]` task. Returns the
/// champion and `(best, mean)` per generation.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None, generations=None, pop_size=None))]
fn evolve(
    py: Python<'_>,
    config: Option<&str>,
    seed: Option<u64>,
    generations: Option<usize>,
    pop_size: Option<usize>,
) -> PyResult<(PyController, Vec<(f64, f64)>)> {
    let cfg = self::config(config, seed, generations, pop_size)?;
    let task = cfg.task().map_err(value_err)?;
    let (best, log) = py
        .detach(|| {
            let n = task.weight_count();
            let range = cfg.evolution.init_range;
            ga(
                &cfg.evolution,
                |_, rng| Genome::Weights(random_weights(n, range, rng)),
                &|g: &Genome| task.score(g),
            )
        })
        .map_err(runtime_err)?;
    let c = task.controller_for(&best.genome).ok_or_else(|| runtime_err("champion does not decode"))?;
    Ok((PyController(c), log.generations.iter().map(|g| (g.best, g.mean)).collect()))
}

/// Observe `controller` on a robot carrying `failure` from all four
/// corners, then rank the nine failure cases by how well each explains the
/// traces. Returns `(case, discrepancy)` pairs, best first.
#[pyfunction]
#[pyo3(signature = (controller, world, failure, severity=0.5, seed=0, pop_size=16, generations=30))]
#[allow(clippy::too_many_arguments)]
fn diagnose(
    py: Python<'_>,
    controller: &PyController,
    world: &PyWorld,
    failure: &str,
    severity: f64,
    seed: u64,
    pop_size: usize,
    generations: usize,
) -> PyResult<Vec<(String, f64)>> {
    let est = estimation::EstimationConfig {
        n_hidden: controller.0.topology().n_hidden(),
        ..Default::default()
    };
    let onset = (est.onset_fraction * est.reference_steps as f64) as usize;
    let f = FailureInjection::new(failure_case(failure)?, onset, severity, seed);
    f.validate().map_err(value_err)?;
    let truth = SimParams::ideal().with_failure(f);
    let body = RobotBody::default();
    let settings = reference_settings(est.reference_steps, seed, StepConfig::default());
    let obs: Vec<Observation> = (0..4)
        .map(|k| {
            let s = world.0.corner_start(k, &body);
            let meta = TraceMeta {
                controller_id: "py".into(),
                world_seed: seed,
                terrain: world.0.terrain.kind,
                obstacles: world.0.obstacles.len(),
                start: [s.x, s.y, s.heading],
                trial_seed: seed,
                dt: settings.step.dt(),
            };
            run_reference(&controller.0, &truth, &world.0, &body, &s, &settings, meta)
        })
        .collect();
    let evo = evobot_core::evolution::EvoConfig {
        pop_size,
        generations,
        seed,
        ..Default::default()
    };
    let ranking = py
        .detach(|| estimation::diagnose(&obs, &evo, &est, &SimParams::ideal()))
        .map_err(runtime_err)?;
    Ok(ranking.into_iter().map(|d| (d.case.name().to_string(), d.discrepancy)).collect())
}

/// Evolve and test a controller in every environment of the config's
/// `[experiment]` section. Returns one dict per environment.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None, generations=None, pop_size=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: Option<&str>,
    seed: Option<u64>,
    generations: Option<usize>,
    pop_size: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = self::config(config, seed, generations, pop_size)?;
    let report = py.detach(|| run_matrix(&cfg.plan(), &cfg.evolution)).map_err(runtime_err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("env", &r.env)?;
            d.set_item("best_evolved", r.best_evolved)?;
            d.set_item("mean_fitness", r.mean_fitness)?;
            d.set_item("max_fitness", r.max_fitness)?;
            d.set_item("mean_r_l", r.mean_r_l)?;
            d.set_item("mean_r_r", r.mean_r_r)?;
            d.set_item("mean_sensor_perf", r.mean_sensor_perf)?;
            d.set_item("reach_rate", r.reach_rate)?;
            d.set_item("rotations_per_reach", r.rotations_per_reach)?;
            Ok(d)
        })
        .collect()
}

/// The full default configuration as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    Config::default().to_toml().map_err(runtime_err)
}

#[pyfunction]
fn failure_cases() -> Vec<&'static str> {
    FailureCase::ALL.iter().map(|c| c.name()).collect()
}

#[pymodule]
pub fn evobot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGenotype>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(failure_cases, m)?)?;
    Ok(())
}
