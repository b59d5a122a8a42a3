//! Trial scoring.
//!
//! `fitness = clamp(w_progress * (1 - d_final / d_initial) + reach_bonus
//! - w_rotation * r / r_budget - w_penalty * penalty_steps / steps_used, 0, 1)`
//! where distances are measured to the edge of the reach circle, `r` is the
//! mean of the two wheels' revolutions, and `r_budget` is the revolutions a
//! straight run to the target needs, plus a slack fraction.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Controller;
use crate::sim::{simulate, RunSettings, SimParams, StepRecord};
use crate::trace::{SensorTrace, TraceMeta, TraceRow};
use crate::world::{
    proximity_from_distance, ray_distances, RobotBody, RobotState, StepConfig, World,
    SENSOR_COUNT,
};

/// Agreement tolerance between a reported and a geometric proximity value.
pub const SENSOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FitnessError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitnessConfig {
    pub w_progress: f64,
    pub reach_bonus: f64,
    pub w_rotation: f64,
    pub w_penalty: f64,
    pub clearance_floor: f64,
    pub max_steps: usize,
    /// Extra fraction on top of the straight-line rotation count.
    pub rotation_slack: f64,
    pub sensor_noise: f64,
    pub step: StepConfig,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            w_progress: 0.6,
            reach_bonus: 0.3,
            w_rotation: 0.05,
            w_penalty: 0.05,
            clearance_floor: 1.0,
            max_steps: 200,
            rotation_slack: 0.5,
            sensor_noise: 0.0,
            step: StepConfig::default(),
        }
    }
}

impl FitnessConfig {
    pub fn validate(&self) -> Result<(), String> {
        let weights = [self.w_progress, self.reach_bonus, self.w_rotation, self.w_penalty];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err("fitness weights must be finite and >= 0".into());
        }
        if self.w_progress + self.reach_bonus > 1.0 + 1e-12 {
            return Err("w_progress + reach_bonus must not exceed 1".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be >= 1".into());
        }
        if !(self.rotation_slack >= 0.0) || !(self.sensor_noise >= 0.0) {
            return Err("rotation_slack and sensor_noise must be >= 0".into());
        }
        self.step.validate()
    }

    pub fn settings(&self, seed: u64) -> RunSettings {
        RunSettings {
            max_steps: self.max_steps,
            stop_on_reach: true,
            sensor_noise: self.sensor_noise,
            seed,
            step: self.step,
        }
    }

    /// Revolutions per wheel for a straight run covering `distance`.
    pub fn rotation_budget(&self, body: &RobotBody, distance: f64) -> f64 {
        (1.0 + self.rotation_slack) * distance / (TAU * body.wheel_radius)
    }

    /// Score a finished trial from its summary numbers.
    pub fn score(
        &self,
        d_initial: f64,
        d_final: f64,
        reached: bool,
        rotations: f64,
        r_budget: f64,
        penalty_steps: usize,
        steps_used: usize,
    ) -> f64 {
        let mut f = self.w_progress * (1.0 - d_final / d_initial);
        if reached {
            f += self.reach_bonus;
        }
        f -= self.w_rotation * rotations / r_budget;
        if steps_used > 0 {
            f -= self.w_penalty * penalty_steps as f64 / steps_used as f64;
        }
        f.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub fitness: f64,
    pub rotations_left: f64,
    pub rotations_right: f64,
    pub reached: bool,
    pub steps_used: usize,
    pub sensor_performance: f64,
    pub penalty_steps: usize,
}

impl TrialResult {
    pub fn rotations(&self) -> f64 {
        (self.rotations_left + self.rotations_right) / 2.0
    }
}

/// One trial with ideal simulator parameters.
pub fn evaluate_trial(
    world: &World,
    body: &RobotBody,
    controller: &Controller,
    cfg: &FitnessConfig,
    start: &RobotState,
    seed: u64,
) -> Result<TrialResult, FitnessError> {
    let mut c = controller.clone();
    run_trial(world, body, &mut c, &SimParams::ideal(), cfg, start, seed, |_| {})
}

/// General trial: explicit simulator parameters, the controller is run in
/// place (so its learned weights can be inspected) and every step is
/// passed to `observe`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    world: &World,
    body: &RobotBody,
    controller: &mut Controller,
    params: &SimParams,
    cfg: &FitnessConfig,
    start: &RobotState,
    seed: u64,
    mut observe: impl FnMut(&StepRecord),
) -> Result<TrialResult, FitnessError> {
    let d_initial = world.distance_to_goal(body, start.x, start.y);
    if d_initial <= 0.0 {
        return Err(FitnessError::Config("trial starts on the target".into()));
    }
    let mut penalty_steps = 0;
    let mut agree = 0usize;
    let out = simulate(world, body, controller, params, start, &cfg.settings(seed), |r| {
        if r.next.clearance < cfg.clearance_floor {
            penalty_steps += 1;
        }
        agree += r
            .seen
            .iter()
            .zip(&r.oracle)
            .filter(|(a, b)| (*a - *b).abs() <= SENSOR_TOLERANCE)
            .count();
        observe(r);
    });
    let s = out.final_state;
    let rotations_left = s.wheel_angle_left / TAU;
    let rotations_right = s.wheel_angle_right / TAU;
    let d_final = world.distance_to_goal(body, s.x, s.y);
    let r_budget = cfg.rotation_budget(body, d_initial);
    let fitness = cfg.score(
        d_initial,
        d_final,
        out.reached,
        (rotations_left + rotations_right) / 2.0,
        r_budget,
        penalty_steps,
        out.steps,
    );
    let sensor_performance = if out.steps == 0 {
        1.0
    } else {
        agree as f64 / (out.steps * SENSOR_COUNT) as f64
    };
    Ok(TrialResult {
        fitness,
        rotations_left,
        rotations_right,
        reached: out.reached,
        steps_used: out.steps,
        sensor_performance,
        penalty_steps,
    })
}

/// Trial that also records its sensor trace.
#[allow(clippy::too_many_arguments)]
pub fn traced_trial(
    world: &World,
    body: &RobotBody,
    controller: &Controller,
    params: &SimParams,
    cfg: &FitnessConfig,
    start: &RobotState,
    seed: u64,
    meta: TraceMeta,
) -> Result<(TrialResult, SensorTrace), FitnessError> {
    let mut rows = Vec::new();
    let mut c = controller.clone();
    let res = run_trial(world, body, &mut c, params, cfg, start, seed, |r| rows.push(TraceRow::from_record(r)))?;
    Ok((res, SensorTrace { meta, rows }))
}

/// Fraction of (step, sensor) pairs whose recorded value matches the
/// noise-free geometric reading at the recorded pose.
pub fn sensor_performance(trace: &SensorTrace, world: &World, body: &RobotBody) -> f64 {
    if trace.rows.is_empty() {
        return 0.0;
    }
    let mut agree = 0;
    for row in &trace.rows {
        let state = RobotState::at(row.x, row.y, row.heading, body);
        let d = ray_distances(world, body, &state);
        for k in 0..SENSOR_COUNT {
            if (proximity_from_distance(d[k], body.sensor_range) - row.s[k]).abs() <= SENSOR_TOLERANCE {
                agree += 1;
            }
        }
    }
    agree as f64 / (trace.rows.len() * SENSOR_COUNT) as f64
}

/// One row of the per-trial CSV log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub seed: u64,
    pub env: String,
    pub fitness: f64,
    pub r_l: f64,
    pub r_r: f64,
    pub reached: bool,
    pub sensor_perf: f64,
    pub penalty_steps: usize,
}

impl TrialRow {
    pub fn new(seed: u64, env: &str, r: &TrialResult) -> TrialRow {
        TrialRow {
            seed,
            env: env.to_string(),
            fitness: r.fitness,
            r_l: r.rotations_left,
            r_r: r.rotations_right,
            reached: r.reached,
            sensor_perf: r.sensor_performance,
            penalty_steps: r.penalty_steps,
        }
    }
}

pub fn write_trial_log(rows: &[TrialRow], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trial_log(input: impl std::io::Read) -> Result<Vec<TrialRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
