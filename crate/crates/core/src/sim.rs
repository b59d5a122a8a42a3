//! The sense, activate, act loop shared by fitness trials, reference runs
//! and re-simulation during estimation.

use std::borrow::Cow;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, FailureCase, FailureInjection};
use crate::rng;
use crate::world::{
    proximity_from_distance, ray_distances, reached_target, step, RobotBody, RobotState,
    SensorReading, StepConfig, World, SENSOR_COUNT,
};

/// Lower and upper bound for every gain in [`SimParams`].
pub const GAIN_RANGE: (f64, f64) = (0.0, 2.0);

const NOISE_SALT: u64 = 0x6e6f_6973_65;

/// Simulator parameters: what the estimation phase tunes to explain a
/// recorded trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub motor_gain_left: f64,
    pub motor_gain_right: f64,
    pub sensor_gains: [f64; SENSOR_COUNT],
    /// Multiplies the world's slope sensitivity.
    pub slope_gain: f64,
    pub failure_hypothesis: FailureInjection,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams::ideal()
    }
}

impl SimParams {
    pub fn ideal() -> SimParams {
        SimParams {
            motor_gain_left: 1.0,
            motor_gain_right: 1.0,
            sensor_gains: [1.0; SENSOR_COUNT],
            slope_gain: 1.0,
            failure_hypothesis: FailureInjection::nothing(),
        }
    }

    pub fn with_failure(mut self, failure: FailureInjection) -> SimParams {
        self.failure_hypothesis = failure;
        self
    }

    pub fn gains(&self) -> impl Iterator<Item = f64> + '_ {
        [self.motor_gain_left, self.motor_gain_right, self.slope_gain]
            .into_iter()
            .chain(self.sensor_gains)
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(g) = self.gains().find(|g| !(GAIN_RANGE.0..=GAIN_RANGE.1).contains(g)) {
            return Err(format!("gain {g} outside [0, 2]"));
        }
        self.failure_hypothesis.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub max_steps: usize,
    pub stop_on_reach: bool,
    /// Relative standard deviation of multiplicative range noise.
    pub sensor_noise: f64,
    pub seed: u64,
    pub step: StepConfig,
}

/// Everything known about one simulated step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub index: usize,
    pub t: f64,
    /// Pose before the step.
    pub state: RobotState,
    /// Proximity values the network saw, after gains, noise and failures.
    pub seen: [f64; SENSOR_COUNT],
    /// Noise-free geometric proximity for the same pose.
    pub oracle: [f64; SENSOR_COUNT],
    /// Output-neuron activations (before wheel-level failures).
    pub outputs: (f64, f64),
    /// Wheel commands actually sent to the motors.
    pub motor: (f64, f64),
    pub next: RobotState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub final_state: RobotState,
    pub steps: usize,
    pub reached: bool,
}

/// The failure a run uses: the hypothesis when it names a case, otherwise
/// whatever the controller already carries.
pub fn effective_failure(controller: &Controller, params: &SimParams) -> FailureInjection {
    if params.failure_hypothesis.case != FailureCase::NothingFail {
        params.failure_hypothesis
    } else {
        controller.failure.unwrap_or_default()
    }
}

/// Run `controller` from `start`. The controller is reset first and keeps
/// its post-run weights (they differ from the initial ones only when
/// plasticity is on).
pub fn simulate(
    world: &World,
    body: &RobotBody,
    controller: &mut Controller,
    params: &SimParams,
    start: &RobotState,
    settings: &RunSettings,
    mut observe: impl FnMut(&StepRecord),
) -> RunOutcome {
    let world: Cow<World> = if params.slope_gain == 1.0 {
        Cow::Borrowed(world)
    } else {
        let mut w = world.clone();
        w.slope_sensitivity *= params.slope_gain;
        Cow::Owned(w)
    };
    let failure = effective_failure(controller, params);
    controller.failure = Some(failure);
    controller.reset();

    let mut noise = rng::stream(settings.seed, NOISE_SALT);
    let dt = settings.step.dt();
    let mut state = *start;
    let mut reached = reached_target(&world, body, &state);
    let mut steps = 0;
    while steps < settings.max_steps && !(reached && settings.stop_on_reach) {
        let b = failure.body_at(body, steps);
        let dist = ray_distances(&world, &b, &state);
        let oracle = dist.map(|d| proximity_from_distance(d, b.sensor_range));
        let mut proximity = [0.0; SENSOR_COUNT];
        for k in 0..SENSOR_COUNT {
            let d = if settings.sensor_noise > 0.0 {
                let n: f64 = StandardNormal.sample(&mut noise);
                dist[k] * (1.0 + settings.sensor_noise * n).max(0.0)
            } else {
                dist[k]
            };
            proximity[k] = (proximity_from_distance(d, b.sensor_range) * params.sensor_gains[k]).clamp(0.0, 1.0);
        }
        let reading = SensorReading {
            proximity,
            touch: state.touching,
            rotation_rate_left: state.wheel_rate_left,
            rotation_rate_right: state.wheel_rate_right,
        };
        let cmd = controller.activate(&reading);
        let motor = (cmd.0 * params.motor_gain_left, cmd.1 * params.motor_gain_right);
        let next = step(&world, &b, &state, motor, &settings.step);
        observe(&StepRecord {
            index: steps,
            t: settings.step.t_start + steps as f64 * dt,
            state,
            seen: controller.last_inputs(),
            oracle,
            outputs: controller.last_outputs(),
            motor,
            next,
        });
        state = next;
        steps += 1;
        reached = reached_target(&world, body, &state);
    }
    RunOutcome {
        final_state: state,
        steps,
        reached,
    }
}
