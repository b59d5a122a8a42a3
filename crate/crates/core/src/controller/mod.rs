//! Feedforward neural controller mapping sensor readings to wheel commands.
//!
//! Inputs are the ten proximity readings, an alert unit that fires when the
//! summed proximity reaches the threshold `Th`, and a constant bias. Units
//! use tanh. Hidden units (if any) form one layer.

mod failure;
mod primitives;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genotype::{BodyPlan, NeuronKind};
use crate::world::{SensorReading, SENSOR_COUNT};

pub use failure::{FailureCase, FailureInjection};
pub use primitives::{primitive_command, run_primitive_sequence, Primitive, PrimitiveSequence};

/// Index of the alert input.
pub const ALERT_INPUT: usize = SENSOR_COUNT;
/// Index of the bias input.
pub const BIAS_INPUT: usize = SENSOR_COUNT + 1;
/// Sensors, alert and bias.
pub const INPUT_COUNT: usize = SENSOR_COUNT + 2;
pub const OUTPUT_COUNT: usize = 2;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("weight vector has {got} entries, topology needs {expected}")]
    WeightCount { expected: usize, got: usize },
    #[error("invalid controller: {0}")]
    Invalid(String),
    #[error("controller file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

/// Layered feedforward wiring. Node indices: inputs, then hidden units, then
/// the left and right output units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_hidden: usize,
    edges: Vec<Edge>,
}

impl Topology {
    /// With no hidden units every input feeds both outputs. Otherwise every
    /// input feeds every hidden unit, and hidden units plus bias feed the
    /// outputs.
    pub fn layered(n_hidden: usize) -> Topology {
        let mut edges = Vec::new();
        let out0 = INPUT_COUNT + n_hidden;
        if n_hidden == 0 {
            for o in 0..OUTPUT_COUNT {
                for i in 0..INPUT_COUNT {
                    edges.push(Edge { from: i, to: out0 + o });
                }
            }
        } else {
            for h in 0..n_hidden {
                for i in 0..INPUT_COUNT {
                    edges.push(Edge { from: i, to: INPUT_COUNT + h });
                }
            }
            for o in 0..OUTPUT_COUNT {
                for h in 0..n_hidden {
                    edges.push(Edge {
                        from: INPUT_COUNT + h,
                        to: out0 + o,
                    });
                }
                edges.push(Edge {
                    from: BIAS_INPUT,
                    to: out0 + o,
                });
            }
        }
        Topology { n_hidden, edges }
    }

    pub fn n_inputs(&self) -> usize {
        INPUT_COUNT
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_outputs(&self) -> usize {
        OUTPUT_COUNT
    }

    pub fn node_count(&self) -> usize {
        INPUT_COUNT + self.n_hidden + OUTPUT_COUNT
    }

    pub fn output_node(&self, k: usize) -> usize {
        INPUT_COUNT + self.n_hidden + k
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, from: usize, to: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.from == from && e.to == to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlasticityRule {
    None,
    Hebbian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlasticityConfig {
    pub rule: PlasticityRule,
    pub eta: f64,
    pub weight_clip: f64,
}

/// Defaults describe the rule used when lifetime learning is switched on.
impl Default for PlasticityConfig {
    fn default() -> Self {
        PlasticityConfig::hebbian(0.01, 4.0)
    }
}

impl PlasticityConfig {
    pub fn off() -> Self {
        PlasticityConfig {
            rule: PlasticityRule::None,
            eta: 0.0,
            weight_clip: 4.0,
        }
    }

    pub fn hebbian(eta: f64, weight_clip: f64) -> Self {
        PlasticityConfig {
            rule: PlasticityRule::Hebbian,
            eta,
            weight_clip,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.weight_clip > 0.0) {
            return Err(format!("weight_clip must be > 0, got {}", self.weight_clip));
        }
        Ok(())
    }

    fn learning(&self) -> bool {
        self.rule == PlasticityRule::Hebbian && self.eta != 0.0
    }
}

/// One Hebbian update, `w <- clip(w + eta * pre * post)`, over every edge.
/// `acts` holds the activation of every node.
pub fn plasticity_step(weights: &mut [f64], edges: &[Edge], acts: &[f64], cfg: &PlasticityConfig) {
    if !cfg.learning() {
        return;
    }
    for (w, e) in weights.iter_mut().zip(edges) {
        *w = (*w + cfg.eta * acts[e.from] * acts[e.to]).clamp(-cfg.weight_clip, cfg.weight_clip);
    }
}

/// Settings shared by every controller built from a flat weight genome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub hidden: usize,
    pub threshold: f64,
    /// Rule applied during trials when lifetime learning is enabled.
    pub plasticity: PlasticityConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            hidden: 4,
            threshold: 1.0,
            plasticity: PlasticityConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn topology(&self) -> Topology {
        Topology::layered(self.hidden)
    }

    pub fn weight_count(&self) -> usize {
        self.topology().edge_count()
    }

    /// Controller with plasticity switched on only when `learning` is set.
    pub fn build(&self, weights: Vec<f64>, learning: bool) -> Result<Controller, ControllerError> {
        let mut c = Controller::new(self.topology(), weights, self.threshold)?;
        if learning {
            c.plasticity = self.plasticity;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.threshold.is_finite() {
            return Err("threshold must be finite".into());
        }
        self.plasticity.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    topology: Topology,
    weights: Vec<f64>,
    pub threshold: f64,
    pub plasticity: PlasticityConfig,
    pub failure: Option<FailureInjection>,
    acts: Vec<f64>,
    steps: usize,
}

impl Controller {
    pub fn new(topology: Topology, weights: Vec<f64>, threshold: f64) -> Result<Self, ControllerError> {
        if weights.len() != topology.edge_count() {
            return Err(ControllerError::WeightCount {
                expected: topology.edge_count(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(ControllerError::Invalid(format!("non-finite weight {w}")));
        }
        let acts = vec![0.0; topology.node_count()];
        Ok(Controller {
            topology,
            weights,
            threshold,
            plasticity: PlasticityConfig::off(),
            failure: None,
            acts,
            steps: 0,
        })
    }

    /// Uniform weights in `[-1, 1]`.
    pub fn random(topology: Topology, threshold: f64, seed: u64) -> Controller {
        let mut rng = crate::rng::seeded(seed);
        let weights = (0..topology.edge_count())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Controller::new(topology, weights, threshold).expect("finite weights")
    }

    pub fn zeros(topology: Topology, threshold: f64) -> Controller {
        let n = topology.edge_count();
        Controller::new(topology, vec![0.0; n], threshold).expect("finite weights")
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn with_failure(mut self, failure: FailureInjection) -> Self {
        self.failure = Some(failure);
        self
    }

    /// Activations of every node after the last call to `activate`.
    pub fn activations(&self) -> &[f64] {
        &self.acts
    }

    /// Sensor values the network saw on the last step.
    pub fn last_inputs(&self) -> [f64; SENSOR_COUNT] {
        let mut out = [0.0; SENSOR_COUNT];
        out.copy_from_slice(&self.acts[..SENSOR_COUNT]);
        out
    }

    /// Output-neuron activations on the last step, before any wheel-level
    /// failure is applied.
    pub fn last_outputs(&self) -> (f64, f64) {
        let o = self.topology.output_node(0);
        (self.acts[o], self.acts[o + 1])
    }

    /// Number of `activate` calls since construction or `reset`.
    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Clear activations and the step counter. Weights are kept.
    pub fn reset(&mut self) {
        self.acts.iter_mut().for_each(|a| *a = 0.0);
        self.steps = 0;
    }

    fn active_failure(&self, step: usize) -> Option<FailureInjection> {
        self.failure.filter(|f| f.active(step))
    }

    /// One feedforward pass. Returns wheel commands in `[-1, 1]` with
    /// controller-level failures applied; body-level failures are the
    /// simulator's job. Runs one plasticity update afterwards when enabled.
    pub fn activate(&mut self, s: &SensorReading) -> (f64, f64) {
        let step = self.steps;
        self.steps += 1;
        let fail = self.active_failure(step);
        let n_hidden = self.topology.n_hidden;

        let mut sum = 0.0;
        for k in 0..SENSOR_COUNT {
            self.acts[k] = s.proximity[k];
        }
        if let Some(f) = fail.filter(|f| f.case == FailureCase::SensorFail) {
            self.acts[f.target(SENSOR_COUNT)] = 0.0;
        }
        for k in 0..SENSOR_COUNT {
            sum += self.acts[k];
        }
        self.acts[ALERT_INPUT] = if sum >= self.threshold { 1.0 } else { 0.0 };
        self.acts[BIAS_INPUT] = 1.0;

        let mut net = vec![0.0; self.topology.node_count()];
        let out0 = self.topology.output_node(0);
        // edges are grouped by layer, so one ordered sweep suffices once
        // hidden units are squashed before the first output edge
        let mut hidden_done = n_hidden == 0;
        for i in 0..self.weights.len() {
            let (e, w) = (self.topology.edges[i], self.weights[i]);
            if !hidden_done && e.to >= out0 {
                self.finish_hidden(&net, fail);
                hidden_done = true;
            }
            net[e.to] += w * self.acts[e.from];
        }
        if !hidden_done {
            self.finish_hidden(&net, fail);
        }
        for k in 0..OUTPUT_COUNT {
            self.acts[out0 + k] = net[out0 + k].tanh();
        }
        if let Some(f) = fail.filter(|f| f.case == FailureCase::WheelNeuronFail) {
            self.acts[out0 + f.target(OUTPUT_COUNT)] = 0.0;
        }

        let (mut left, mut right) = (self.acts[out0], self.acts[out0 + 1]);
        if let Some(f) = fail {
            match f.case {
                FailureCase::MotorWeak => {
                    let keep = 1.0 - f.severity;
                    if f.target(2) == 0 {
                        left *= keep;
                    } else {
                        right *= keep;
                    }
                }
                FailureCase::LeftWheelDamage => left = 0.0,
                FailureCase::RightWheelDamage => right = 0.0,
                _ => {}
            }
        }
        plasticity_step(&mut self.weights, &self.topology.edges, &self.acts, &self.plasticity);
        (left, right)
    }

    fn finish_hidden(&mut self, net: &[f64], fail: Option<FailureInjection>) {
        let n_hidden = self.topology.n_hidden;
        for h in 0..n_hidden {
            self.acts[INPUT_COUNT + h] = net[INPUT_COUNT + h].tanh();
        }
        if let Some(f) = fail.filter(|f| f.case == FailureCase::HiddenNeuronFail && n_hidden > 0) {
            self.acts[INPUT_COUNT + f.target(n_hidden)] = 0.0;
        }
    }

    pub fn to_text(&self) -> String {
        let file = ControllerFile {
            format_version: FORMAT_VERSION,
            hidden: self.topology.n_hidden,
            threshold: self.threshold,
            weights: self.weights.clone(),
            plasticity: self.plasticity,
            failure: self.failure,
        };
        toml::to_string(&file).expect("controller serializes")
    }

    pub fn from_text(text: &str) -> Result<Controller, ControllerError> {
        let file: ControllerFile = toml::from_str(text).map_err(|e| ControllerError::Format(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(ControllerError::Format(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        file.plasticity.validate().map_err(ControllerError::Invalid)?;
        if let Some(f) = &file.failure {
            f.validate().map_err(ControllerError::Invalid)?;
        }
        let mut c = Controller::new(Topology::layered(file.hidden), file.weights, file.threshold)?;
        c.plasticity = file.plasticity;
        c.failure = file.failure;
        Ok(c)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ControllerError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Controller, ControllerError> {
        Controller::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerFile {
    format_version: u32,
    hidden: usize,
    threshold: f64,
    weights: Vec<f64>,
    plasticity: PlasticityConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<FailureInjection>,
}

/// Controller whose hidden-layer size is the plan's hidden-neuron count.
///
/// The k-th sensor neuron of the plan is input `k % 10`, the k-th hidden
/// neuron is hidden unit k and the k-th motor neuron is output `k % 2`.
/// Plan connections that land on an existing edge set its weight; all other
/// weights are drawn from `seed`.
pub fn controller_from_bodyplan(bp: &BodyPlan, threshold: f64, seed: u64) -> Controller {
    let n_hidden = bp.neurons.iter().filter(|n| n.kind == NeuronKind::Hidden).count();
    let mut c = Controller::random(Topology::layered(n_hidden), threshold, seed);
    let out0 = c.topology.output_node(0);
    let mut counts = [0usize; 3];
    let node: Vec<usize> = bp
        .neurons
        .iter()
        .map(|n| {
            let slot = match n.kind {
                NeuronKind::Touch => 0,
                NeuronKind::Hidden => 1,
                NeuronKind::Motor => 2,
            };
            let k = counts[slot];
            counts[slot] += 1;
            match n.kind {
                NeuronKind::Touch => k % SENSOR_COUNT,
                NeuronKind::Hidden => INPUT_COUNT + k,
                NeuronKind::Motor => out0 + k % OUTPUT_COUNT,
            }
        })
        .collect();
    let lookup = |id: usize| bp.neurons.iter().position(|n| n.id == id).map(|k| node[k]);
    for conn in &bp.connections {
        let (Some(from), Some(to)) = (lookup(conn.from), lookup(conn.to)) else {
            continue;
        };
        if let Some(i) = c.topology.edge_index(from, to) {
            c.weights[i] = conn.weight;
        }
    }
    c
}

#[cfg(test)]
mod tests;
