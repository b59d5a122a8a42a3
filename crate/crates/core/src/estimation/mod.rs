//! Estimation and exploration: evolve a controller in simulation, run it on
//! a held-out reference robot, then evolve simulator parameters (gains and
//! a failure hypothesis) until re-simulation reproduces the recorded
//! traces.
//!
//! The discrepancy between recorded and re-simulated traces is the mean
//! absolute per-sample difference over steps and channels, averaged over
//! the `C` recorded controllers.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, FailureCase, FailureInjection};
use crate::evolution::{evolve, EvoConfig, EvoError, Genome, RobotTask, RunLog};
use crate::rng;
use crate::sim::{simulate, RunSettings, GAIN_RANGE};
use crate::trace::{SensorTrace, TraceMeta, TraceRow, CHANNELS};
use crate::world::{RobotBody, RobotState, World, SENSOR_COUNT};

pub use crate::sim::SimParams;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("no traces given")]
    NoTraces,
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Evo(#[from] EvoError),
}

/// A recorded run together with what is needed to re-simulate it.
#[derive(Debug, Clone)]
pub struct Observation {
    pub trace: SensorTrace,
    pub controller: Controller,
    pub world: World,
    pub body: RobotBody,
    pub settings: RunSettings,
}

impl Observation {
    pub fn start(&self) -> RobotState {
        let [x, y, h] = self.trace.meta.start;
        RobotState::at(x, y, h, &self.body)
    }

    /// Trace the observation's controller produces under `params`.
    pub fn resimulate(&self, params: &SimParams) -> Vec<TraceRow> {
        let mut c = self.controller.clone();
        let mut rows = Vec::with_capacity(self.trace.len());
        simulate(&self.world, &self.body, &mut c, params, &self.start(), &self.settings, |r| {
            rows.push(TraceRow::from_record(r))
        });
        rows
    }
}

/// Settings for a reference run: fixed length, no early stop.
pub fn reference_settings(steps: usize, seed: u64, step: crate::world::StepConfig) -> RunSettings {
    RunSettings {
        max_steps: steps,
        stop_on_reach: false,
        sensor_noise: 0.0,
        seed,
        step,
    }
}

/// Run `c` on the reference robot described by `true_params` and record
/// its trace.
pub fn run_reference(
    c: &Controller,
    true_params: &SimParams,
    world: &World,
    body: &RobotBody,
    start: &RobotState,
    settings: &RunSettings,
    meta: TraceMeta,
) -> Observation {
    let mut cc = c.clone();
    let mut rows = Vec::with_capacity(settings.max_steps);
    simulate(world, body, &mut cc, true_params, start, settings, |r| rows.push(TraceRow::from_record(r)));
    Observation {
        trace: SensorTrace { meta, rows },
        controller: c.clone(),
        world: world.clone(),
        body: body.clone(),
        settings: *settings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub value: f64,
    pub per_controller: Vec<f64>,
}

/// Mean absolute difference over the common steps and every channel.
pub fn trace_distance(physical: &[TraceRow], simulated: &[TraceRow]) -> f64 {
    if physical.len() != simulated.len() {
        log::warn!(
            "trace length mismatch ({} vs {}); comparing the common prefix",
            physical.len(),
            simulated.len()
        );
    }
    let n = physical.len().min(simulated.len());
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (p, s) in physical.iter().zip(simulated) {
        let (a, b) = (p.channels(), s.channels());
        let row: f64 = (0..CHANNELS).map(|k| (a[k] - b[k]).abs()).sum();
        total += row;
    }
    total / (n * CHANNELS) as f64
}

/// Discrepancy of `candidate` against the observations. Terms are summed
/// in sorted order so the value does not depend on observation order.
pub fn discrepancy(observations: &[Observation], candidate: &SimParams) -> Result<Discrepancy, EstimationError> {
    if observations.is_empty() {
        return Err(EstimationError::NoTraces);
    }
    let per_controller: Vec<f64> = observations
        .iter()
        .map(|o| trace_distance(&o.trace.rows, &o.resimulate(candidate)))
        .collect();
    let mut sorted = per_controller.clone();
    sorted.sort_by(f64::total_cmp);
    let value = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(Discrepancy { value, per_controller })
}

/// What the estimation phase may vary around a prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    /// Gains are searched within `prior +- gain_span`, inside `[0, 2]`.
    pub gain_span: f64,
    /// Hidden-layer size of the observed controllers.
    pub n_hidden: usize,
    /// Fraction of the initial population that keeps the prior gains.
    pub prior_share: f64,
    pub reference_steps: usize,
    /// Default onset for injected failures, as a fraction of the run.
    pub onset_fraction: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            gain_span: 0.2,
            n_hidden: 4,
            prior_share: 0.5,
            reference_steps: 200,
            onset_fraction: 0.5,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gain_span >= 0.0) || !(0.0..=1.0).contains(&self.prior_share) || !(0.0..=1.0).contains(&self.onset_fraction) {
            return Err("gain_span >= 0, prior_share and onset_fraction in [0, 1] required".into());
        }
        if self.reference_steps == 0 {
            return Err("reference_steps must be >= 1".into());
        }
        Ok(())
    }
}

const GAIN_GENES: usize = 3 + SENSOR_COUNT;
/// Gains, then severity, target choice, onset and (when the case is free) case.
const FAILURE_GENES: usize = 4;

fn unit(g: f64) -> f64 {
    ((g + 1.0) / 2.0).clamp(0.0, 1.0)
}

fn ununit(u: f64) -> f64 {
    u.clamp(0.0, 1.0) * 2.0 - 1.0
}

/// Maps real-valued genomes to simulator parameters around a prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpace {
    pub prior: SimParams,
    pub case: Option<FailureCase>,
    pub gain_span: f64,
    pub n_hidden: usize,
    pub max_onset: usize,
}

impl ParamSpace {
    pub fn gene_count(&self) -> usize {
        GAIN_GENES + FAILURE_GENES
    }

    fn gain(&self, prior: f64, g: f64) -> f64 {
        (prior + self.gain_span * g.clamp(-1.0, 1.0)).clamp(GAIN_RANGE.0, GAIN_RANGE.1)
    }

    pub fn decode(&self, genes: &[f64]) -> SimParams {
        let p = &self.prior;
        let mut out = SimParams {
            motor_gain_left: self.gain(p.motor_gain_left, genes[0]),
            motor_gain_right: self.gain(p.motor_gain_right, genes[1]),
            slope_gain: self.gain(p.slope_gain, genes[2]),
            sensor_gains: std::array::from_fn(|k| self.gain(p.sensor_gains[k], genes[3 + k])),
            failure_hypothesis: FailureInjection::nothing(),
        };
        let f = &genes[GAIN_GENES..];
        let case = self.case.unwrap_or_else(|| {
            let k = (unit(f[3]) * FailureCase::ALL.len() as f64) as usize;
            FailureCase::ALL[k.min(FailureCase::ALL.len() - 1)]
        });
        if case != FailureCase::NothingFail {
            let choices = case.choices(self.n_hidden);
            let index = ((unit(f[1]) * choices as f64) as usize).min(choices - 1);
            out.failure_hypothesis = FailureInjection {
                case,
                onset_step: (unit(f[2]) * self.max_onset as f64).round() as usize,
                severity: if case.has_severity() { unit(f[0]) } else { 1.0 },
                rng_seed: index as u64,
            };
        }
        out
    }

    /// Genes for the prior gains with the given failure genes.
    fn prior_genes(&self, failure: [f64; FAILURE_GENES]) -> Vec<f64> {
        let mut g = vec![0.0; GAIN_GENES];
        g.extend(failure);
        g
    }

    /// Genes that decode to the prior itself (gains exactly, failure as
    /// close as the encoding allows).
    pub fn encode_prior(&self) -> Vec<f64> {
        let f = self.prior.failure_hypothesis;
        let case_gene = FailureCase::ALL.iter().position(|&c| c == f.case).unwrap_or(8) as f64;
        let choices = f.case.choices(self.n_hidden) as f64;
        self.prior_genes([
            ununit(f.severity),
            ununit((f.rng_seed as f64 + 0.5) / choices),
            ununit(if self.max_onset == 0 { 0.0 } else { f.onset_step as f64 / self.max_onset as f64 }),
            ununit((case_gene + 0.5) / 9.0),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub params: SimParams,
    pub discrepancy: f64,
    pub log: RunLog,
}

const STRATA_SALT: u64 = 0x1a75;

/// Failure genes for `n` individuals, one stratum of `[-1, 1]` each per
/// gene. Discrete choices (which sensor, which neuron) and onset windows
/// are then all represented in the first generation.
fn latin_hypercube(n: usize, seed: u64) -> Vec<[f64; FAILURE_GENES]> {
    let mut rng = rng::stream(seed, STRATA_SALT);
    let mut out = vec![[0.0; FAILURE_GENES]; n];
    for g in 0..FAILURE_GENES {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (row, &k) in out.iter_mut().zip(&order) {
            row[g] = ununit((k as f64 + rng.random::<f64>()) / n as f64);
        }
    }
    out
}

/// GA over simulator parameters minimising the discrepancy. The initial
/// population contains the prior; a `prior_share` of it keeps the prior
/// gains and varies only the failure genes, which are stratified across
/// the population rather than drawn independently.
pub fn estimation_phase(
    observations: &[Observation],
    evo: &EvoConfig,
    est: &EstimationConfig,
    prior: &SimParams,
    case: Option<FailureCase>,
) -> Result<EstimationResult, EstimationError> {
    if observations.is_empty() {
        return Err(EstimationError::NoTraces);
    }
    prior.validate().map_err(EstimationError::Params)?;
    let max_onset = observations.iter().map(|o| o.trace.len()).max().unwrap_or(0);
    let space = ParamSpace {
        prior: *prior,
        case,
        gain_span: est.gain_span,
        n_hidden: est.n_hidden,
        max_onset,
    };
    let anchored = ((evo.pop_size as f64) * est.prior_share).round() as usize;
    let strata = latin_hypercube(evo.pop_size.saturating_sub(1), evo.seed);
    let init = |i: usize, rng: &mut rng::Rng| {
        if i == 0 {
            return Genome::Weights(space.encode_prior());
        }
        let failure = strata[i - 1];
        if i < anchored {
            Genome::Weights(space.prior_genes(failure))
        } else {
            let mut g: Vec<f64> = (0..GAIN_GENES).map(|_| rng.random_range(-1.0..=1.0)).collect();
            g.extend(failure);
            Genome::Weights(g)
        }
    };
    let score = |g: &Genome| {
        let p = space.decode(g.weights().expect("parameter genomes are real vectors"));
        -discrepancy(observations, &p).map(|d| d.value).unwrap_or(f64::INFINITY)
    };
    let (best, log) = evolve(evo, init, &score)?;
    let params = space.decode(best.genome.weights().expect("real vector"));
    Ok(EstimationResult {
        params,
        discrepancy: -best.fitness.unwrap_or(f64::NEG_INFINITY),
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub case: FailureCase,
    pub discrepancy: f64,
    pub params: SimParams,
}

/// Estimate once per failure case with the case clamped and rank the cases
/// by best discrepancy, lowest first. Exact ties go to the simpler case.
pub fn diagnose(
    observations: &[Observation],
    evo: &EvoConfig,
    est: &EstimationConfig,
    prior: &SimParams,
) -> Result<Vec<Diagnosis>, EstimationError> {
    let mut out = Vec::with_capacity(FailureCase::ALL.len());
    for (k, case) in FailureCase::ALL.into_iter().enumerate() {
        let cfg = EvoConfig {
            seed: rng::derive(evo.seed, k as u64),
            ..*evo
        };
        let r = estimation_phase(observations, &cfg, est, prior, Some(case))?;
        out.push(Diagnosis {
            case,
            discrepancy: r.discrepancy,
            params: r.params,
        });
    }
    out.sort_by(|a, b| {
        a.discrepancy
            .total_cmp(&b.discrepancy)
            .then(a.case.parsimony_rank().cmp(&b.case.parsimony_rank()))
    });
    Ok(out)
}

/// `rank,case,discrepancy`
pub fn write_diagnosis_csv(d: &[Diagnosis], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "case", "discrepancy"])?;
    for (k, row) in d.iter().enumerate() {
        w.write_record([(k + 1).to_string(), row.case.to_string(), row.discrepancy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn diagnosis_text(d: &[Diagnosis]) -> String {
    let mut s = String::from("rank  case               discrepancy\n");
    for (k, row) in d.iter().enumerate() {
        s.push_str(&format!("{:>4}  {:<17}  {:.6}\n", k + 1, row.case.name(), row.discrepancy));
    }
    s
}

/// Evolve a controller inside the simulator configured with `params`.
pub fn exploration_phase(params: &SimParams, evo: &EvoConfig, task: &RobotTask) -> Result<(Controller, RunLog), EstimationError> {
    params.validate().map_err(EstimationError::Params)?;
    let mut t = task.clone();
    t.params = *params;
    t.lifetime_learning = false;
    let n = t.weight_count();
    let range = evo.init_range;
    let (best, log) = evolve(
        evo,
        |_, rng| Genome::Weights(crate::evolution::random_weights(n, range, rng)),
        &|g: &Genome| t.score(g),
    )?;
    let c = t.controller_for(&best.genome).expect("weight genome matches topology");
    Ok((c, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    /// Discrepancy of the working parameters before and after estimation,
    /// measured on every trace gathered so far.
    pub before: f64,
    pub after: f64,
    pub params: SimParams,
}

/// The full loop: explore with the working parameters, run the champion on
/// the reference robot, estimate new working parameters from all traces
/// gathered so far, and repeat.
#[allow(clippy::too_many_arguments)]
pub fn estimation_loop(
    start_params: &SimParams,
    true_params: &SimParams,
    task: &RobotTask,
    explore: &EvoConfig,
    estimate: &EvoConfig,
    est: &EstimationConfig,
    cycles: usize,
) -> Result<(Vec<CycleReport>, Vec<Observation>), EstimationError> {
    let mut working = *start_params;
    let mut observations = Vec::new();
    let mut reports = Vec::new();
    for cycle in 0..cycles {
        let evo = EvoConfig {
            seed: rng::derive(explore.seed, cycle as u64),
            ..*explore
        };
        let (controller, _) = exploration_phase(&working, &evo, task)?;
        let corner = cycle % 4;
        let start = task.world.corner_start(corner, &task.body);
        let seed = rng::derive(task.seed, 1000 + cycle as u64);
        let settings = reference_settings(est.reference_steps, seed, task.fitness.step);
        let meta = TraceMeta {
            controller_id: format!("cycle-{cycle}"),
            world_seed: task.world.terrain.seed,
            terrain: task.world.terrain.kind,
            obstacles: task.world.obstacles.len(),
            start: [start.x, start.y, start.heading],
            trial_seed: seed,
            dt: settings.step.dt(),
        };
        observations.push(run_reference(&controller, true_params, &task.world, &task.body, &start, &settings, meta));
        let before = discrepancy(&observations, &working)?.value;
        let evo = EvoConfig {
            seed: rng::derive(estimate.seed, cycle as u64),
            ..*estimate
        };
        let r = estimation_phase(&observations, &evo, est, &working, None)?;
        working = r.params;
        reports.push(CycleReport {
            cycle,
            before,
            after: r.discrepancy,
            params: working,
        });
    }
    Ok((reports, observations))
}

#[cfg(test)]
mod tests;
