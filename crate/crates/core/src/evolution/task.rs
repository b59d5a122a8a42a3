use serde::{Deserialize, Serialize};

use super::Genome;
use crate::controller::{controller_from_bodyplan, Controller, ControllerConfig};
use crate::fitness::{run_trial, FitnessConfig, TrialResult};
use crate::rng;
use crate::sim::SimParams;
use crate::world::{RobotBody, World};

/// Target-reaching task used to score controller genomes: one trial from
/// each listed start corner, fitness is the mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotTask {
    pub world: World,
    pub body: RobotBody,
    pub fitness: FitnessConfig,
    pub controller: ControllerConfig,
    pub params: SimParams,
    pub starts: Vec<usize>,
    pub lifetime_learning: bool,
    pub seed: u64,
}

impl RobotTask {
    pub fn new(world: World, body: RobotBody, fitness: FitnessConfig, controller: ControllerConfig) -> Self {
        RobotTask {
            world,
            body,
            fitness,
            controller,
            params: SimParams::ideal(),
            starts: vec![0, 1, 2, 3],
            lifetime_learning: false,
            seed: 0,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.controller.weight_count()
    }

    /// Controller a genome decodes to. Weight genomes of the wrong length
    /// yield `None`.
    pub fn controller_for(&self, genome: &Genome) -> Option<Controller> {
        match genome {
            Genome::Weights(w) => self.controller.build(w.clone(), self.lifetime_learning).ok(),
            Genome::Genotype(g) => {
                let mut c = controller_from_bodyplan(&g.body_plan(), self.controller.threshold, self.seed);
                if self.lifetime_learning {
                    c.plasticity = self.controller.plasticity;
                }
                Some(c)
            }
        }
    }

    pub fn trial_seed(&self, k: usize) -> u64 {
        rng::derive(self.seed, k as u64)
    }

    /// One trial per start corner. The controller is used in place so
    /// callers can inspect learned weights afterwards.
    pub fn run(&self, controller: &Controller) -> Vec<TrialResult> {
        self.starts
            .iter()
            .enumerate()
            .map(|(k, &corner)| {
                let mut c = controller.clone();
                let start = self.world.corner_start(corner, &self.body);
                run_trial(
                    &self.world,
                    &self.body,
                    &mut c,
                    &self.params,
                    &self.fitness,
                    &start,
                    self.trial_seed(k),
                    |_| {},
                )
                .unwrap_or_else(|_| zero_trial())
            })
            .collect()
    }

    pub fn trials(&self, genome: &Genome) -> Vec<TrialResult> {
        match self.controller_for(genome) {
            Some(c) => self.run(&c),
            None => self.starts.iter().map(|_| zero_trial()).collect(),
        }
    }

    pub fn score(&self, genome: &Genome) -> f64 {
        let t = self.trials(genome);
        if t.is_empty() {
            return 0.0;
        }
        t.iter().map(|r| r.fitness).sum::<f64>() / t.len() as f64
    }
}

fn zero_trial() -> TrialResult {
    TrialResult {
        fitness: 0.0,
        rotations_left: 0.0,
        rotations_right: 0.0,
        reached: false,
        steps_used: 0,
        sensor_performance: 0.0,
        penalty_steps: 0,
    }
}
