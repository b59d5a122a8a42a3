use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EvoError;
use crate::controller::Controller;
use crate::rng;
use crate::world::{reached_target, sense, step, Obstacle, RobotBody, RobotState, StepConfig, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcologyConfig {
    pub n_robots: usize,
    pub energy_init: f64,
    pub energy_drain: f64,
    pub energy_gain: f64,
    /// Steps between replacement rounds.
    pub epoch_steps: usize,
    pub tournament_k: usize,
    pub mutation_sigma: f64,
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for EcologyConfig {
    fn default() -> Self {
        EcologyConfig {
            n_robots: 6,
            energy_init: 100.0,
            energy_drain: 1.0,
            energy_gain: 60.0,
            epoch_steps: 100,
            tournament_k: 2,
            mutation_sigma: 0.2,
            mutation_rate: 0.2,
            seed: 0,
        }
    }
}

impl EcologyConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        if self.n_robots < 2 {
            return Err(EvoError::Config(format!("n_robots must be >= 2, got {}", self.n_robots)));
        }
        if self.epoch_steps == 0 || self.tournament_k == 0 {
            return Err(EvoError::Config("epoch_steps and tournament_k must be >= 1".into()));
        }
        if !(self.energy_init > 0.0) || !(self.energy_drain >= 0.0) || !(self.energy_gain >= 0.0) {
            return Err(EvoError::Config("energies need init > 0, drain >= 0, gain >= 0".into()));
        }
        Ok(())
    }
}

/// How a robot in the ecology picks its wheel commands.
#[derive(Debug, Clone, PartialEq)]
pub enum EcoPolicy {
    Network(Controller),
    /// Fixed command, for scripted robots.
    Constant(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifespan {
    pub id: u64,
    pub parent: Option<u64>,
    pub born: usize,
    pub died: Option<usize>,
    pub targets_reached: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcologyEpoch {
    pub epoch: usize,
    pub alive: usize,
    pub deaths: usize,
    pub respawns: usize,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EcologyOutcome {
    Completed,
    /// Every robot died; the step at which the last one went.
    ExtinctionEnd { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcologyLog {
    pub epochs: Vec<EcologyEpoch>,
    pub lifespans: Vec<Lifespan>,
    /// `(step, alive, deaths so far, respawns so far)` after every step.
    pub census: Vec<(usize, usize, usize, usize)>,
    pub outcome: EcologyOutcome,
}

struct Robot {
    id: u64,
    policy: EcoPolicy,
    state: RobotState,
    energy: f64,
    record: usize,
}

fn free_corner(world: &World, body: &RobotBody, robots: &[Robot], next: &mut usize) -> RobotState {
    for _ in 0..4 {
        let s = world.corner_start(*next, body);
        *next += 1;
        let clear = robots.iter().all(|r| {
            (r.state.x - s.x).hypot(r.state.y - s.y) >= 2.0 * body.body_radius
        });
        if clear {
            return s;
        }
    }
    world.corner_start(*next, body)
}

/// All robots share one world and see each other as obstacles. Each step
/// drains energy; reaching the target adds energy and sends the robot back
/// to a free corner. Robots at zero energy die. At each epoch boundary the
/// dead are replaced by mutated copies of tournament winners (by energy)
/// among the living.
pub fn ecology_run(
    cfg: &EcologyConfig,
    world: &World,
    body: &RobotBody,
    step_cfg: &StepConfig,
    initial: Vec<EcoPolicy>,
    epochs: usize,
) -> Result<EcologyLog, EvoError> {
    cfg.validate()?;
    if initial.len() != cfg.n_robots {
        return Err(EvoError::Config(format!(
            "{} initial policies for n_robots = {}",
            initial.len(),
            cfg.n_robots
        )));
    }
    let mut rng = rng::stream(cfg.seed, 0xec0);
    let mut arena = world.clone();
    let mut lifespans = Vec::new();
    let mut robots: Vec<Robot> = Vec::new();
    let mut corner = 0;
    for (k, policy) in initial.into_iter().enumerate() {
        let state = free_corner(world, body, &robots, &mut corner);
        lifespans.push(Lifespan {
            id: k as u64,
            parent: None,
            born: 0,
            died: None,
            targets_reached: 0,
        });
        robots.push(Robot {
            id: k as u64,
            policy,
            state,
            energy: cfg.energy_init,
            record: k,
        });
    }
    let mut next_id = robots.len() as u64;
    let (mut deaths, mut respawns) = (0, 0);
    let mut census = Vec::new();
    let mut epoch_log = Vec::new();
    let mut outcome = EcologyOutcome::Completed;
    let mut t = 0;

    'epochs: for epoch in 0..epochs {
        for _ in 0..cfg.epoch_steps {
            for i in 0..robots.len() {
                arena.obstacles.clear();
                arena.obstacles.extend_from_slice(&world.obstacles);
                arena.obstacles.extend(robots.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| Obstacle {
                    center: [r.state.x, r.state.y],
                    radius: body.body_radius,
                }));
                let r = &mut robots[i];
                let cmd = match &mut r.policy {
                    EcoPolicy::Network(c) => c.activate(&sense(&arena, body, &r.state)),
                    EcoPolicy::Constant(l, rr) => (*l, *rr),
                };
                r.state = step(&arena, body, &r.state, cmd, step_cfg);
                r.energy -= cfg.energy_drain;
                if reached_target(&arena, body, &r.state) {
                    r.energy += cfg.energy_gain;
                    lifespans[r.record].targets_reached += 1;
                    let mut s = world.corner_start(corner, body);
                    for k in 0..4 {
                        let c = arena.corner_start(corner + k, body);
                        if !arena.collides(c.x, c.y, body.body_radius) {
                            s = c;
                            corner += k;
                            break;
                        }
                    }
                    corner += 1;
                    r.state = s;
                }
            }
            let before = robots.len();
            robots.retain(|r| {
                if r.energy <= 0.0 {
                    lifespans[r.record].died = Some(t);
                    false
                } else {
                    true
                }
            });
            deaths += before - robots.len();
            census.push((t, robots.len(), deaths, respawns));
            t += 1;
            if robots.is_empty() {
                outcome = EcologyOutcome::ExtinctionEnd { step: t - 1 };
                epoch_log.push(EcologyEpoch {
                    epoch,
                    alive: 0,
                    deaths,
                    respawns,
                    mean_energy: 0.0,
                });
                break 'epochs;
            }
        }
        // replacement round
        while robots.len() < cfg.n_robots {
            let mut best = rng.random_range(0..robots.len());
            for _ in 1..cfg.tournament_k {
                let c = rng.random_range(0..robots.len());
                if robots[c].energy > robots[best].energy {
                    best = c;
                }
            }
            let parent = &robots[best];
            let policy = mutate_policy(&parent.policy, cfg, &mut rng);
            let parent_id = parent.id;
            let state = free_corner(world, body, &robots, &mut corner);
            lifespans.push(Lifespan {
                id: next_id,
                parent: Some(parent_id),
                born: t,
                died: None,
                targets_reached: 0,
            });
            robots.push(Robot {
                id: next_id,
                policy,
                state,
                energy: cfg.energy_init,
                record: lifespans.len() - 1,
            });
            next_id += 1;
            respawns += 1;
        }
        epoch_log.push(EcologyEpoch {
            epoch,
            alive: robots.len(),
            deaths,
            respawns,
            mean_energy: robots.iter().map(|r| r.energy).sum::<f64>() / robots.len() as f64,
        });
    }
    Ok(EcologyLog {
        epochs: epoch_log,
        lifespans,
        census,
        outcome,
    })
}

fn mutate_policy(p: &EcoPolicy, cfg: &EcologyConfig, rng: &mut rng::Rng) -> EcoPolicy {
    match p {
        EcoPolicy::Constant(l, r) => EcoPolicy::Constant(*l, *r),
        EcoPolicy::Network(c) => {
            let mut child = c.clone();
            child.reset();
            let normal = Normal::new(0.0, cfg.mutation_sigma.max(0.0)).expect("finite sigma");
            for w in child.weights_mut() {
                if rng.random_bool(cfg.mutation_rate) {
                    *w += normal.sample(rng);
                }
            }
            EcoPolicy::Network(child)
        }
    }
}
