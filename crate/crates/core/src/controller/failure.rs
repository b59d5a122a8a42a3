use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::world::RobotBody;

/// The nine failure cases, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCase {
    MotorWeak,
    LeftWheelDamage,
    RightWheelDamage,
    BodyDamage,
    WheelNeuronFail,
    SensorFail,
    JointFail,
    HiddenNeuronFail,
    NothingFail,
}

impl FailureCase {
    pub const ALL: [FailureCase; 9] = [
        FailureCase::MotorWeak,
        FailureCase::LeftWheelDamage,
        FailureCase::RightWheelDamage,
        FailureCase::BodyDamage,
        FailureCase::WheelNeuronFail,
        FailureCase::SensorFail,
        FailureCase::JointFail,
        FailureCase::HiddenNeuronFail,
        FailureCase::NothingFail,
    ];

    /// Simplest explanation first; used to break exact ties in diagnosis.
    pub const PARSIMONY: [FailureCase; 9] = [
        FailureCase::NothingFail,
        FailureCase::LeftWheelDamage,
        FailureCase::RightWheelDamage,
        FailureCase::JointFail,
        FailureCase::WheelNeuronFail,
        FailureCase::SensorFail,
        FailureCase::HiddenNeuronFail,
        FailureCase::MotorWeak,
        FailureCase::BodyDamage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureCase::MotorWeak => "MotorWeak",
            FailureCase::LeftWheelDamage => "LeftWheelDamage",
            FailureCase::RightWheelDamage => "RightWheelDamage",
            FailureCase::BodyDamage => "BodyDamage",
            FailureCase::WheelNeuronFail => "WheelNeuronFail",
            FailureCase::SensorFail => "SensorFail",
            FailureCase::JointFail => "JointFail",
            FailureCase::HiddenNeuronFail => "HiddenNeuronFail",
            FailureCase::NothingFail => "NothingFail",
        }
    }

    pub fn parsimony_rank(self) -> usize {
        Self::PARSIMONY.iter().position(|&c| c == self).unwrap()
    }

    /// Does the case use a severity value?
    pub fn has_severity(self) -> bool {
        matches!(self, FailureCase::MotorWeak | FailureCase::BodyDamage)
    }

    /// Number of distinct targets the case chooses between, given the
    /// hidden-layer size. 1 means the case has no choice to make.
    pub fn choices(self, n_hidden: usize) -> usize {
        match self {
            FailureCase::MotorWeak | FailureCase::WheelNeuronFail => 2,
            FailureCase::SensorFail => crate::world::SENSOR_COUNT,
            FailureCase::HiddenNeuronFail => n_hidden.max(1),
            _ => 1,
        }
    }
}

impl fmt::Display for FailureCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FailureCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureCase::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown failure case `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureInjection {
    pub case: FailureCase,
    pub onset_step: usize,
    pub severity: f64,
    /// Picks the affected wheel, sensor or neuron (`rng_seed % choices`).
    pub rng_seed: u64,
}

impl Default for FailureInjection {
    fn default() -> Self {
        FailureInjection::nothing()
    }
}

impl FailureInjection {
    pub const DEFAULT_SEVERITY: f64 = 0.5;

    pub fn new(case: FailureCase, onset_step: usize, severity: f64, rng_seed: u64) -> Self {
        FailureInjection {
            case,
            onset_step,
            severity,
            rng_seed,
        }
    }

    pub fn nothing() -> Self {
        FailureInjection::new(FailureCase::NothingFail, 0, 0.0, 0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(format!("severity {} outside [0, 1]", self.severity));
        }
        Ok(())
    }

    pub fn active(&self, step: usize) -> bool {
        self.case != FailureCase::NothingFail && step >= self.onset_step
    }

    pub fn target(&self, choices: usize) -> usize {
        (self.rng_seed % choices.max(1) as u64) as usize
    }

    /// Body seen by the physics at `step`. Only body damage and joint
    /// failure act here; everything else is applied inside the controller.
    pub fn body_at(&self, body: &RobotBody, step: usize) -> RobotBody {
        let mut b = body.clone();
        if !self.active(step) {
            return b;
        }
        match self.case {
            FailureCase::BodyDamage => {
                b.nominal_clearance *= 1.0 - self.severity;
                b.max_wheel_speed *= 1.0 - self.severity / 2.0;
            }
            FailureCase::JointFail => b.turn_gain *= 0.5,
            _ => {}
        }
        b
    }

    /// Does the case change the body at all?
    pub fn touches_body(&self) -> bool {
        matches!(self.case, FailureCase::BodyDamage | FailureCase::JointFail)
    }
}
