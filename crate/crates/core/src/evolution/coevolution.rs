use serde::{Deserialize, Serialize};

use super::{worker_pool, EvoConfig, EvoError, EvoState, Genome, Individual, RunLog};
use crate::rng;
use crate::world::{Obstacle, World};

/// Decodes a real vector into an obstacle layout. Gene 0 sets the count,
/// then each obstacle takes three genes (x, y, radius). Genes are read on
/// `[-1, 1]`; obstacles that break the placement rule are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleLayout {
    pub max_obstacles: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub robot_radius: f64,
}

fn unit(g: f64) -> f64 {
    ((g + 1.0) / 2.0).clamp(0.0, 1.0)
}

impl ObstacleLayout {
    pub fn gene_count(&self) -> usize {
        1 + 3 * self.max_obstacles
    }

    pub fn empty_genome(&self) -> Genome {
        Genome::Weights(vec![-1.0; self.gene_count()])
    }

    pub fn decode(&self, world: &World, genes: &[f64]) -> Vec<Obstacle> {
        let n = (unit(genes.first().copied().unwrap_or(-1.0)) * self.max_obstacles as f64).round() as usize;
        let (lo, hi) = (world.bounds.min, world.bounds.max);
        let mut placed = Vec::new();
        for k in 0..n.min(self.max_obstacles) {
            let g = &genes[1 + 3 * k..4 + 3 * k];
            let radius = self.radius_min + unit(g[2]) * (self.radius_max - self.radius_min);
            let o = Obstacle {
                center: [
                    lo[0] + unit(g[0]) * (hi[0] - lo[0]),
                    lo[1] + unit(g[1]) * (hi[1] - lo[1]),
                ],
                radius,
            };
            if world.admits(&o, &placed, self.robot_radius) {
                placed.push(o);
            }
        }
        placed
    }

    /// `world` with its obstacles replaced by the decoded layout.
    pub fn apply(&self, world: &World, genome: &Genome) -> World {
        let mut w = world.clone();
        w.obstacles = genome.weights().map(|g| self.decode(world, g)).unwrap_or_default();
        w
    }
}

#[derive(Debug, Clone)]
pub struct CoevolutionResult {
    pub best_a: Individual,
    pub best_b: Individual,
    pub log_a: RunLog,
    pub log_b: RunLog,
}

/// Robots (A) against obstacle layouts (B). Each A is scored against the
/// current best B and each B against the current best A, with
/// `fitness_B = 1 - fitness_A`. A population is re-scored whenever its
/// opponent changes. `cfg_b.generations == 0` freezes B at its initial
/// best, which reduces the run to plain evolution of A.
pub fn coevolve<F>(
    cfg_a: &EvoConfig,
    cfg_b: &EvoConfig,
    init_a: impl FnMut(usize, &mut rng::Rng) -> Genome,
    init_b: impl FnMut(usize, &mut rng::Rng) -> Genome,
    cross_eval: &F,
) -> Result<CoevolutionResult, EvoError>
where
    F: Fn(&Genome, &Genome) -> f64 + Sync,
{
    let mut a = EvoState::new(*cfg_a, init_a)?;
    let mut b = EvoState::new(*cfg_b, init_b)?;
    let frozen = cfg_b.generations == 0;
    let pool = worker_pool(cfg_a.workers)?;
    let mut best_b = b.population[0].clone();
    let mut opponent_of_a: Option<Genome> = None;
    let mut b_pending = !frozen;
    loop {
        if opponent_of_a.as_ref() != Some(&best_b.genome) {
            a.invalidate();
            opponent_of_a = Some(best_b.genome.clone());
        }
        let against = best_b.genome.clone();
        a.evaluate(pool.as_ref(), &|g: &Genome| cross_eval(g, &against));
        if b_pending {
            b_pending = false;
            let champion = a.best().genome.clone();
            b.invalidate();
            b.evaluate(pool.as_ref(), &|g: &Genome| 1.0 - cross_eval(&champion, g));
            best_b = b.best().clone();
        }
        let a_done = a.generation >= cfg_a.generations;
        if a_done {
            break;
        }
        a.breed();
        if !frozen && b.generation < cfg_b.generations {
            b.breed();
            b_pending = true;
        }
    }
    Ok(CoevolutionResult {
        best_a: a.best().clone(),
        best_b,
        log_a: a.log,
        log_b: b.log,
    })
}
