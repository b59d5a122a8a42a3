//! The environment matrix (terrain x obstacles), fitness curves and the
//! failure-case distribution, with CSV export.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerConfig, FailureCase, FailureInjection};
use crate::evolution::{evolve, random_weights, EvoConfig, EvoError, Genome, RobotTask};
use crate::fitness::{evaluate_trial, FitnessConfig, TrialResult, TrialRow};
use crate::rng;
use crate::world::{PlacementError, RobotBody, TerrainKind, WorldConfig};

const CELL_SALT: u64 = 0xce11;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    World(#[from] PlacementError),
    #[error(transparent)]
    Evo(#[from] EvoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub terrain: TerrainKind,
    pub obstacles: bool,
}

impl EnvSpec {
    /// Flat, bumpy and combined terrain, each without and with obstacles.
    pub fn matrix() -> Vec<EnvSpec> {
        TerrainKind::ALL
            .into_iter()
            .flat_map(|terrain| [false, true].map(|obstacles| EnvSpec { terrain, obstacles }))
            .collect()
    }

}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.terrain.name(), if self.obstacles { "obs" } else { "no-obs" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub environments: Vec<EnvSpec>,
    pub trials_per_env: usize,
    /// Obstacle count for environments with obstacles.
    pub obstacle_count: usize,
    /// Seed for worlds, evolution and trials.
    pub seed: u64,
    /// Start corners used while evolving; trials cycle through all four.
    pub evolution_starts: Vec<usize>,
    /// Failure-distribution trials inject failures from this step on.
    pub failure_onset: usize,
    pub failure_severity: f64,
    pub world: WorldConfig,
    pub body: RobotBody,
    pub fitness: FitnessConfig,
    pub controller: ControllerConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            environments: EnvSpec::matrix(),
            trials_per_env: 25,
            obstacle_count: 8,
            seed: 0,
            evolution_starts: vec![0, 1, 2, 3],
            failure_onset: 0,
            failure_severity: FailureInjection::DEFAULT_SEVERITY,
            world: WorldConfig::default(),
            body: RobotBody::default(),
            fitness: FitnessConfig::default(),
            controller: ControllerConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Plan(m.to_string()));
        if self.environments.is_empty() {
            return bad("at least one environment is required");
        }
        if self.trials_per_env == 0 {
            return bad("trials_per_env must be >= 1");
        }
        if self.evolution_starts.is_empty() {
            return bad("evolution_starts must not be empty");
        }
        if !(0.0..=1.0).contains(&self.failure_severity) {
            return bad("failure_severity must lie in [0, 1]");
        }
        self.fitness.validate().map_err(ExperimentError::Plan)?;
        self.controller.validate().map_err(ExperimentError::Plan)?;
        self.body.validate().map_err(ExperimentError::Plan)?;
        self.world.validate()?;
        Ok(())
    }

    /// Every cell of a replicate shares one seed: the obstacle layout, the
    /// bump field and the GA's random stream are common, so cells differ
    /// only in terrain kind and obstacle presence.
    fn cell_seed(&self) -> u64 {
        rng::derive(self.seed, CELL_SALT)
    }

    /// The evaluation task for one environment.
    pub fn task(&self, env: &EnvSpec) -> Result<RobotTask, ExperimentError> {
        let seed = self.cell_seed();
        let world = WorldConfig {
            terrain: env.terrain,
            obstacles: if env.obstacles { self.obstacle_count } else { 0 },
            seed,
            robot_radius: self.body.body_radius,
            ..self.world.clone()
        }
        .build()?;
        let mut t = RobotTask::new(world, self.body.clone(), self.fitness, self.controller);
        t.starts = self.evolution_starts.clone();
        t.seed = seed;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRow {
    pub env: String,
    pub best_evolved: f64,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub mean_r_l: f64,
    pub mean_r_r: f64,
    pub mean_sensor_perf: f64,
    pub reach_rate: f64,
    /// Mean of `(r_l + r_r)` over trials that reached the target; NaN if none did.
    pub rotations_per_reach: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub case: FailureCase,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDistribution {
    pub env: String,
    pub baseline: FailureRow,
    pub rows: Vec<FailureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<EnvRow>,
    /// Best and mean fitness per generation, per environment.
    pub curves: Vec<(String, Vec<(f64, f64)>)>,
    pub trials: Vec<TrialRow>,
    pub failures: Option<FailureDistribution>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Aggregate one environment's trial rows.
pub fn summarize(env: &str, best_evolved: f64, rows: &[TrialRow]) -> EnvRow {
    EnvRow {
        env: env.to_string(),
        best_evolved,
        mean_fitness: mean(rows.iter().map(|r| r.fitness)),
        max_fitness: rows.iter().map(|r| r.fitness).fold(f64::NEG_INFINITY, f64::max),
        mean_r_l: mean(rows.iter().map(|r| r.r_l)),
        mean_r_r: mean(rows.iter().map(|r| r.r_r)),
        mean_sensor_perf: mean(rows.iter().map(|r| r.sensor_perf)),
        reach_rate: mean(rows.iter().map(|r| r.reached as u8 as f64)),
        rotations_per_reach: mean(rows.iter().filter(|r| r.reached).map(|r| r.r_l + r.r_r)),
    }
}

/// Best evolved controller for an environment, with its run log.
pub fn evolve_for(
    plan: &ExperimentPlan,
    env: &EnvSpec,
    evo: &EvoConfig,
) -> Result<(RobotTask, Controller, crate::evolution::RunLog), ExperimentError> {
    let task = plan.task(env)?;
    let cfg = EvoConfig {
        seed: rng::derive(evo.seed, plan.cell_seed()),
        ..*evo
    };
    let n = task.weight_count();
    let range = cfg.init_range;
    let (best, log) = evolve(
        &cfg,
        |_, rng| Genome::Weights(random_weights(n, range, rng)),
        &|g: &Genome| task.score(g),
    )?;
    let c = task.controller_for(&best.genome).expect("weight genome matches topology");
    Ok((task, c, log))
}

fn trial_seed(task: &RobotTask, k: usize) -> u64 {
    rng::derive(task.seed, 10_000 + k as u64)
}

fn relocation_trials(
    plan: &ExperimentPlan,
    task: &RobotTask,
    c: &Controller,
    failure: Option<FailureInjection>,
    n: usize,
) -> Vec<TrialResult> {
    (0..n)
        .map(|k| {
            let start = task.world.corner_start(k, &task.body);
            let mut cc = c.clone();
            cc.failure = failure.map(|f| FailureInjection { rng_seed: f.rng_seed.wrapping_add(k as u64), ..f });
            evaluate_trial(&task.world, &task.body, &cc, &plan.fitness, &start, trial_seed(task, k))
                .expect("corner starts are off target")
        })
        .collect()
}

/// Evolve a controller per environment, then run `trials_per_env` trials
/// from the four corners in turn. Cells run in parallel on private copies
/// of their seed streams, so results do not depend on scheduling.
pub fn run_matrix(plan: &ExperimentPlan, evo: &EvoConfig) -> Result<Report, ExperimentError> {
    plan.validate()?;
    evo.validate()?;
    let cell_evo = EvoConfig { workers: 1, ..*evo };
    let cells: Vec<_> = plan
        .environments
        .par_iter()
        .map(|env| -> Result<_, ExperimentError> {
            let (task, c, log) = evolve_for(plan, env, &cell_evo)?;
            let name = env.to_string();
            let trials: Vec<TrialRow> = relocation_trials(plan, &task, &c, None, plan.trials_per_env)
                .iter()
                .enumerate()
                .map(|(k, r)| TrialRow::new(trial_seed(&task, k), &name, r))
                .collect();
            let best = log.generations.last().map(|g| g.best).unwrap_or(f64::NAN);
            let curve = log.generations.iter().map(|g| (g.best, g.mean)).collect();
            Ok((summarize(&name, best, &trials), (name, curve), trials))
        })
        .collect::<Result<_, _>>()?;
    let mut report = Report {
        rows: Vec::new(),
        curves: Vec::new(),
        trials: Vec::new(),
        failures: None,
    };
    for (row, curve, trials) in cells {
        report.rows.push(row);
        report.curves.push(curve);
        report.trials.extend(trials);
    }
    Ok(report)
}

/// Inject each failure case `n_per_case` times (cycling start corners and
/// the affected wheel, sensor or neuron) into a controller evolved for
/// `env`, and count trials that miss the target.
pub fn run_failure_distribution(
    plan: &ExperimentPlan,
    evo: &EvoConfig,
    env: &EnvSpec,
    n_per_case: usize,
) -> Result<FailureDistribution, ExperimentError> {
    if n_per_case == 0 {
        return Err(ExperimentError::Plan("n_per_case must be >= 1".into()));
    }
    plan.validate()?;
    let (task, c, _) = evolve_for(plan, env, evo)?;
    let count = |failure: Option<FailureInjection>, case| {
        let trials = relocation_trials(plan, &task, &c, failure, n_per_case);
        FailureRow {
            case,
            trials: trials.len(),
            failures: trials.iter().filter(|t| !t.reached).count(),
        }
    };
    let baseline = count(None, FailureCase::NothingFail);
    let rows = FailureCase::ALL
        .par_iter()
        .map(|&case| {
            let f = FailureInjection::new(case, plan.failure_onset, plan.failure_severity, 0);
            count(Some(f), case)
        })
        .collect();
    Ok(FailureDistribution {
        env: env.to_string(),
        baseline,
        rows,
    })
}

fn fmt(x: f64) -> String {
    x.to_string()
}

pub fn write_table(report: &Report, out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "env",
        "best_evolved",
        "mean_fitness",
        "max_fitness",
        "mean_r_l",
        "mean_r_r",
        "mean_sensor_perf",
        "reach_rate",
        "rotations_per_reach",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.env.clone(),
            fmt(r.best_evolved),
            fmt(r.mean_fitness),
            fmt(r.max_fitness),
            fmt(r.mean_r_l),
            fmt(r.mean_r_r),
            fmt(r.mean_sensor_perf),
            fmt(r.reach_rate),
            fmt(r.rotations_per_reach),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wide format: one row per generation, best fitness per environment.
pub fn write_curves(report: &Report, out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["generation".to_string()];
    header.extend(report.curves.iter().map(|(e, _)| e.clone()));
    w.write_record(&header)?;
    let len = report.curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for g in 0..len {
        let mut rec = vec![g.to_string()];
        rec.extend(report.curves.iter().map(|(_, c)| c.get(g).map(|p| fmt(p.0)).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format for plotting: `env,generation,best,mean`.
pub fn write_plot_data(report: &Report, out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["env", "generation", "best", "mean"])?;
    for (env, curve) in &report.curves {
        for (g, (best, mean)) in curve.iter().enumerate() {
            w.write_record([env.clone(), g.to_string(), fmt(*best), fmt(*mean)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures(d: Option<&FailureDistribution>, out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "trials", "failures", "failure_rate"])?;
    if let Some(d) = d {
        let row = |w: &mut csv::Writer<_>, name: &str, r: &FailureRow| {
            w.write_record([
                name.to_string(),
                r.trials.to_string(),
                r.failures.to_string(),
                fmt(r.failures as f64 / r.trials as f64),
            ])
        };
        row(&mut w, "baseline", &d.baseline)?;
        for r in &d.rows {
            row(&mut w, r.case.name(), r)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write `table.csv`, `curves.csv`, `failures.csv` and `trials.csv` (and
/// `curves_long.csv` when `plot_data` is set) into `dir`.
pub fn export(report: &Report, dir: &Path, plot_data: bool) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut file = |name: &str| -> Result<std::fs::File, ExperimentError> {
        let p = dir.join(name);
        written.push(p.clone());
        Ok(std::fs::File::create(p)?)
    };
    write_table(report, file("table.csv")?)?;
    write_curves(report, file("curves.csv")?)?;
    write_failures(report.failures.as_ref(), file("failures.csv")?)?;
    crate::fitness::write_trial_log(&report.trials, file("trials.csv")?)?;
    if plot_data {
        write_plot_data(report, file("curves_long.csv")?)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests;
