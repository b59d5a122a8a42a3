use serde::{Deserialize, Serialize};

use crate::world::{sense, step, RobotBody, RobotState, StepConfig, World};

/// Hand-coded behaviours that can be chained into longer routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Primitive {
    Forward,
    TurnLeft,
    TurnRight,
    /// Turn away from the side with the strongest proximity reading.
    Avoid,
    /// Steer toward the target bearing.
    Seek,
}

pub type PrimitiveSequence = Vec<(Primitive, usize)>;

const SEEK_GAIN: f64 = 1.0;

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi);
    r - std::f64::consts::PI
}

/// Wheel command a primitive issues in the given state.
pub fn primitive_command(p: Primitive, world: &World, body: &RobotBody, state: &RobotState) -> (f64, f64) {
    match p {
        Primitive::Forward => (1.0, 1.0),
        Primitive::TurnLeft => (-0.5, 0.5),
        Primitive::TurnRight => (0.5, -0.5),
        Primitive::Avoid => {
            let r = sense(world, body, state);
            let (k, max) = r
                .proximity
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            if max == 0.0 {
                (1.0, 1.0)
            } else if wrap_angle(body.sensor_bearings[k]) > 0.0 {
                (0.5, -0.5)
            } else {
                (-0.5, 0.5)
            }
        }
        Primitive::Seek => {
            let [tx, ty] = world.target.center;
            let bearing = (ty - state.y).atan2(tx - state.x);
            let err = wrap_angle(bearing - state.heading);
            let turn = (SEEK_GAIN * err).clamp(-1.0, 1.0);
            ((1.0 - turn).clamp(-1.0, 1.0), (1.0 + turn).clamp(-1.0, 1.0))
        }
    }
}

/// Execute primitives in order. The returned trajectory starts with the
/// initial state and has one entry per step after it.
pub fn run_primitive_sequence(
    seq: &[(Primitive, usize)],
    world: &World,
    body: &RobotBody,
    state: &RobotState,
    cfg: &StepConfig,
) -> Vec<RobotState> {
    let mut out = vec![*state];
    let mut s = *state;
    for &(p, n) in seq {
        for _ in 0..n {
            s = step(world, body, &s, primitive_command(p, world, body, &s), cfg);
            out.push(s);
        }
    }
    out
}
