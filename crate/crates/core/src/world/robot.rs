//! Differential-drive kinematics and ray-cast proximity sensing.

use serde::{Deserialize, Serialize};

use super::World;

pub const SENSOR_COUNT: usize = 10;

/// Sensor bearings in degrees; index pairs `(2k, 2k+1)` mirror each other
/// about the heading axis, positive angles on the left.
pub const DEFAULT_BEARINGS_DEG: [f64; SENSOR_COUNT] =
    [15.0, -15.0, 45.0, -45.0, 90.0, -90.0, 135.0, -135.0, 170.0, -170.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotBody {
    pub body_radius: f64,
    pub wheel_base: f64,
    pub wheel_radius: f64,
    pub nominal_clearance: f64,
    /// Radians, relative to the heading.
    pub sensor_bearings: [f64; SENSOR_COUNT],
    pub sensor_range: f64,
    /// Wheel angular speed at full command, rad/s.
    pub max_wheel_speed: f64,
    /// Scale on the turn rate; below 1 models a stiff or damaged joint.
    pub turn_gain: f64,
}

impl Default for RobotBody {
    fn default() -> Self {
        RobotBody {
            body_radius: 0.5,
            wheel_base: 0.9,
            wheel_radius: 0.2,
            nominal_clearance: 1.0,
            sensor_bearings: DEFAULT_BEARINGS_DEG.map(f64::to_radians),
            sensor_range: 4.0,
            max_wheel_speed: 10.0,
            turn_gain: 1.0,
        }
    }
}

impl RobotBody {
    pub fn validate(&self) -> Result<(), String> {
        let lengths = [
            ("body_radius", self.body_radius),
            ("wheel_base", self.wheel_base),
            ("wheel_radius", self.wheel_radius),
            ("nominal_clearance", self.nominal_clearance),
            ("sensor_range", self.sensor_range),
            ("max_wheel_speed", self.max_wheel_speed),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("body.{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Straight-line speed at full forward command.
    pub fn top_speed(&self) -> f64 {
        self.wheel_radius * self.max_wheel_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Cumulative absolute wheel rotation, radians.
    pub wheel_angle_left: f64,
    pub wheel_angle_right: f64,
    pub clearance: f64,
    /// Wheel angular rates of the last step, rad/s.
    pub wheel_rate_left: f64,
    pub wheel_rate_right: f64,
    /// Set when the last step was blocked by an obstacle or the bounds.
    pub touching: bool,
}

impl RobotState {
    pub fn at(x: f64, y: f64, heading: f64, body: &RobotBody) -> RobotState {
        RobotState {
            x,
            y,
            heading,
            wheel_angle_left: 0.0,
            wheel_angle_right: 0.0,
            clearance: body.nominal_clearance,
            wheel_rate_left: 0.0,
            wheel_rate_right: 0.0,
            touching: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    /// 1 when touching, 0 when nothing is in range.
    pub proximity: [f64; SENSOR_COUNT],
    pub touch: bool,
    pub rotation_rate_left: f64,
    pub rotation_rate_right: f64,
}

impl SensorReading {
    pub fn total(&self) -> f64 {
        self.proximity.iter().sum()
    }
}

/// Time discretisation: `dt` interpolates between `dt_min` and `dt_max` by
/// the coarseness knob, and a run covers `[t_start, t_finish]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub coarseness: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_start: f64,
    pub t_finish: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            coarseness: 0.5,
            dt_min: 0.05,
            dt_max: 0.15,
            t_start: 0.0,
            t_finish: 30.0,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.coarseness) {
            return Err("step.coarseness must lie in [0, 1]".into());
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err("step requires 0 < dt_min <= dt_max".into());
        }
        if !(self.t_start < self.t_finish) {
            return Err("step requires t_start < t_finish".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt_min + self.coarseness * (self.dt_max - self.dt_min)
    }

    /// Number of whole steps in the time window.
    pub fn steps(&self) -> usize {
        ((self.t_finish - self.t_start) / self.dt()).floor() as usize
    }
}

/// Advance one timestep.
///
/// Forward speed is attenuated going uphill by
/// `max(0, 1 - slope_gain * grade)`; a move that would overlap an obstacle
/// or leave the bounds keeps the old position and sets `touching`, while the
/// heading still turns and the wheels still spin.
pub fn step(
    world: &World,
    body: &RobotBody,
    state: &RobotState,
    motor: (f64, f64),
    cfg: &StepConfig,
) -> RobotState {
    let dt = cfg.dt();
    let left = motor.0.clamp(-1.0, 1.0) * body.max_wheel_speed;
    let right = motor.1.clamp(-1.0, 1.0) * body.max_wheel_speed;
    let mut next = *state;
    next.wheel_angle_left += left.abs() * dt;
    next.wheel_angle_right += right.abs() * dt;
    next.wheel_rate_left = left;
    next.wheel_rate_right = right;

    let v_nominal = body.wheel_radius * (left + right) / 2.0;
    let omega = body.wheel_radius * (right - left) / body.wheel_base * body.turn_gain;
    let v = v_nominal * world.slope_factor(state.x, state.y, state.heading, v_nominal);

    next.heading = state.heading + omega * dt;
    let mid_heading = state.heading + omega * dt / 2.0;
    let nx = state.x + v * dt * mid_heading.cos();
    let ny = state.y + v * dt * mid_heading.sin();
    if v != 0.0 && world.collides(nx, ny, body.body_radius) {
        next.touching = true;
    } else {
        next.x = nx;
        next.y = ny;
        next.touching = false;
    }
    next.clearance = (body.nominal_clearance
        - world.terrain.roughness(next.x, next.y, body.body_radius))
    .max(0.0);
    next
}

/// Distance along each sensor ray from the body edge to the nearest obstacle
/// or wall. Walls always give a finite distance.
pub fn ray_distances(world: &World, body: &RobotBody, state: &RobotState) -> [f64; SENSOR_COUNT] {
    let mut out = [0.0; SENSOR_COUNT];
    for (d, bearing) in out.iter_mut().zip(body.sensor_bearings) {
        let angle = state.heading + bearing;
        let dir = [angle.cos(), angle.sin()];
        let origin = [
            state.x + body.body_radius * dir[0],
            state.y + body.body_radius * dir[1],
        ];
        *d = world.cast_ray(origin, dir);
    }
    out
}

pub fn proximity_from_distance(distance: f64, range: f64) -> f64 {
    (1.0 - distance / range).clamp(0.0, 1.0)
}

/// Noise-free sensor reading.
pub fn sense(world: &World, body: &RobotBody, state: &RobotState) -> SensorReading {
    let d = ray_distances(world, body, state);
    SensorReading {
        proximity: d.map(|d| proximity_from_distance(d, body.sensor_range)),
        touch: state.touching,
        rotation_rate_left: state.wheel_rate_left,
        rotation_rate_right: state.wheel_rate_right,
    }
}

/// Inclusive: touching the rim of the reach circle counts.
pub fn reached_target(world: &World, body: &RobotBody, state: &RobotState) -> bool {
    let dx = state.x - world.target.center[0];
    let dy = state.y - world.target.center[1];
    (dx * dx + dy * dy).sqrt() <= world.target.radius + body.body_radius
}
