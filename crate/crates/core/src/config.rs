//! One TOML file configures every command. Each section is optional and
//! falls back to its defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerConfig, FailureInjection};
use crate::estimation::EstimationConfig;
use crate::evolution::{EcologyConfig, EvoConfig, RobotTask};
use crate::experiments::{EnvSpec, ExperimentPlan};
use crate::fitness::FitnessConfig;
use crate::world::{RobotBody, TerrainKind, WorldConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub environments: Vec<EnvSpec>,
    pub trials_per_env: usize,
    pub obstacle_count: usize,
    pub evolution_starts: Vec<usize>,
    /// Environment whose evolved controller receives injected failures.
    pub failure_env: EnvSpec,
    /// Injections per failure case; 0 skips the failure distribution.
    pub failures_per_case: usize,
    pub failure_onset: usize,
    pub failure_severity: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let p = ExperimentPlan::default();
        ExperimentSection {
            environments: p.environments,
            trials_per_env: p.trials_per_env,
            obstacle_count: p.obstacle_count,
            evolution_starts: p.evolution_starts,
            failure_env: EnvSpec { terrain: TerrainKind::Flat, obstacles: true },
            failures_per_case: 20,
            failure_onset: p.failure_onset,
            failure_severity: p.failure_severity,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub world: WorldConfig,
    pub body: RobotBody,
    pub controller: ControllerConfig,
    pub fitness: FitnessConfig,
    pub evolution: EvoConfig,
    /// Virtual-ecology runs; the epoch count is `evolution.generations`.
    pub ecology: EcologyConfig,
    pub estimation: EstimationConfig,
    pub experiment: ExperimentSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        Config::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        Ok(std::fs::write(path, self.to_toml()?)?)
    }

    /// Override every seed in the file.
    pub fn set_seed(&mut self, seed: u64) {
        self.world.seed = seed;
        self.evolution.seed = seed;
        self.ecology.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| ConfigError::Invalid(m);
        self.world.validate().map_err(|e| bad(format!("world: {e}")))?;
        self.body.validate().map_err(|e| bad(format!("body: {e}")))?;
        self.controller.validate().map_err(|e| bad(format!("controller: {e}")))?;
        self.fitness.validate().map_err(|e| bad(format!("fitness: {e}")))?;
        self.evolution.validate().map_err(|e| bad(format!("evolution: {e}")))?;
        self.ecology.validate().map_err(|e| bad(format!("ecology: {e}")))?;
        self.estimation.validate().map_err(|e| bad(format!("estimation: {e}")))?;
        self.plan().validate().map_err(|e| bad(format!("experiment: {e}")))?;
        FailureInjection::new(
            crate::controller::FailureCase::NothingFail,
            0,
            self.experiment.failure_severity,
            0,
        )
        .validate()
        .map_err(|e| bad(format!("experiment: {e}")))?;
        Ok(())
    }

    pub fn plan(&self) -> ExperimentPlan {
        let e = &self.experiment;
        ExperimentPlan {
            environments: e.environments.clone(),
            trials_per_env: e.trials_per_env,
            obstacle_count: e.obstacle_count,
            seed: self.evolution.seed,
            evolution_starts: e.evolution_starts.clone(),
            failure_onset: e.failure_onset,
            failure_severity: e.failure_severity,
            world: self.world.clone(),
            body: self.body.clone(),
            fitness: self.fitness,
            controller: self.controller,
        }
    }

    /// Evaluation task on the `[world]` section.
    pub fn task(&self) -> Result<RobotTask, ConfigError> {
        let world = WorldConfig {
            robot_radius: self.body.body_radius,
            ..self.world.clone()
        }
        .build()
        .map_err(|e| ConfigError::Invalid(format!("world: {e}")))?;
        let mut t = RobotTask::new(world, self.body.clone(), self.fitness, self.controller);
        t.starts = self.experiment.evolution_starts.clone();
        t.seed = self.evolution.seed;
        t.lifetime_learning = self.evolution.lifetime_learning;
        Ok(t)
    }
}
