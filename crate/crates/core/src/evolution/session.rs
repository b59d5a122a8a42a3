use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EvoConfig, EvoError, EvoState, Genome, Mode, RobotTask};
use crate::fitness::{run_trial, TrialResult};
use crate::rng;

/// Trajectories sent to clients are thinned to at most this many points.
pub const MAX_TRAJECTORY_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("selection timed out; session paused")]
    SelectionTimeout,
    #[error(transparent)]
    Evo(#[from] EvoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingSelection,
    Evaluating,
    Paused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub fitness: f64,
    pub reached: bool,
    pub rotations_l: f64,
    pub rotations_r: f64,
    pub sensor_performance: f64,
    pub trajectory: Vec<[f64; 2]>,
    pub parents: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    /// Ids the user picked from this generation (empty until they do).
    pub selected: Vec<u64>,
}

/// Interactive evolution: each generation waits for a human to pick
/// favourites, which seed the next generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    state: EvoState,
    task: RobotTask,
    candidates: Vec<Candidate>,
    status: SessionStatus,
    history: Vec<HistoryEntry>,
}

fn thin(points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if points.len() <= MAX_TRAJECTORY_POINTS {
        return points;
    }
    let n = points.len();
    (0..MAX_TRAJECTORY_POINTS)
        .map(|k| points[k * (n - 1) / (MAX_TRAJECTORY_POINTS - 1)])
        .collect()
}

impl Session {
    /// Random generation 0, evaluated and ready for a selection.
    pub fn new(id: impl Into<String>, cfg: EvoConfig, task: RobotTask) -> Result<Session, SessionError> {
        Session::with_progress(id, cfg, task, &|_, _| {})
    }

    pub fn with_progress(
        id: impl Into<String>,
        cfg: EvoConfig,
        task: RobotTask,
        progress: &(dyn Fn(usize, usize) + Sync),
    ) -> Result<Session, SessionError> {
        if cfg.mode != Mode::UserGuided {
            return Err(EvoError::Config("session needs mode = user_guided".into()).into());
        }
        let len = task.weight_count();
        let state = EvoState::with_weights(cfg, len)?;
        let mut s = Session {
            id: id.into(),
            state,
            task,
            candidates: Vec::new(),
            status: SessionStatus::Evaluating,
            history: Vec::new(),
        };
        s.evaluate(progress);
        Ok(s)
    }

    pub fn generation(&self) -> usize {
        self.state.generation
    }

    pub fn pop_size(&self) -> usize {
        self.state.population.len()
    }

    pub fn config(&self) -> &EvoConfig {
        &self.state.cfg
    }

    pub fn task(&self) -> &RobotTask {
        &self.task
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn genome(&self, id: u64) -> Option<&Genome> {
        self.state.population.iter().find(|i| i.id == id).map(|i| &i.genome)
    }

    /// Called when no selection arrived in time. Nothing is lost; the next
    /// valid selection resumes the session.
    pub fn pause(&mut self) -> SessionError {
        if self.status == SessionStatus::AwaitingSelection {
            self.status = SessionStatus::Paused;
        }
        SessionError::SelectionTimeout
    }

    pub fn select(&mut self, ids: &[u64]) -> Result<usize, SessionError> {
        self.select_with_progress(ids, &|_, _| {})
    }

    /// Breed the next generation from the chosen ids and evaluate it.
    /// Unknown or empty selections leave the session untouched.
    pub fn select_with_progress(
        &mut self,
        ids: &[u64],
        progress: &(dyn Fn(usize, usize) + Sync),
    ) -> Result<usize, SessionError> {
        if ids.is_empty() {
            return Err(SessionError::InvalidSelection("select at least one id".into()));
        }
        let mut chosen = Vec::new();
        for id in ids {
            match self.state.population.iter().position(|i| i.id == *id) {
                Some(k) => chosen.push(k),
                None => return Err(SessionError::InvalidSelection(format!("unknown id {id}"))),
            }
        }
        chosen.sort_unstable();
        chosen.dedup();
        if let Some(h) = self.history.last_mut() {
            h.selected = chosen.iter().map(|&k| self.state.population[k].id).collect();
        }
        self.status = SessionStatus::Evaluating;
        self.state.breed_from(&chosen);
        self.evaluate(progress);
        Ok(self.state.generation)
    }

    fn evaluate(&mut self, progress: &(dyn Fn(usize, usize) + Sync)) {
        let total = self.state.population.len();
        let done = AtomicUsize::new(0);
        let task = &self.task;
        let results: Vec<(f64, TrialResult, Vec<[f64; 2]>)> = self
            .state
            .population
            .par_iter()
            .map(|ind| {
                let out = evaluate_candidate(task, &ind.genome);
                progress(done.fetch_add(1, Ordering::SeqCst) + 1, total);
                out
            })
            .collect();
        self.candidates = self
            .state
            .population
            .iter_mut()
            .zip(results)
            .map(|(ind, (fitness, r, path))| {
                ind.fitness = Some(fitness);
                Candidate {
                    id: ind.id,
                    fitness,
                    reached: r.reached,
                    rotations_l: r.rotations_left,
                    rotations_r: r.rotations_right,
                    sensor_performance: r.sensor_performance,
                    trajectory: thin(path),
                    parents: ind.parents.clone(),
                }
            })
            .collect();
        self.state.evaluations += total;
        let fits: Vec<f64> = self.candidates.iter().map(|c| c.fitness).collect();
        self.history.push(HistoryEntry {
            generation: self.state.generation,
            best: fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: fits.iter().sum::<f64>() / fits.len() as f64,
            selected: Vec::new(),
        });
        self.status = SessionStatus::AwaitingSelection;
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        let text = serde_json::to_string(self).map_err(|e| EvoError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(EvoError::from)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Session, SessionError> {
        let text = std::fs::read_to_string(path).map_err(EvoError::from)?;
        Ok(serde_json::from_str(&text).map_err(|e| EvoError::Checkpoint(e.to_string()))?)
    }
}

/// Mean fitness over the task's starts, plus the first trial's result and
/// path for display.
fn evaluate_candidate(task: &RobotTask, genome: &Genome) -> (f64, TrialResult, Vec<[f64; 2]>) {
    let trials = task.trials(genome);
    let fitness = trials.iter().map(|t| t.fitness).sum::<f64>() / trials.len().max(1) as f64;
    let mut path = Vec::new();
    let first = match (task.controller_for(genome), task.starts.first()) {
        (Some(mut c), Some(&corner)) => {
            let start = task.world.corner_start(corner, &task.body);
            path.push([start.x, start.y]);
            run_trial(
                &task.world,
                &task.body,
                &mut c,
                &task.params,
                &task.fitness,
                &start,
                rng::derive(task.seed, 0),
                |r| path.push([r.next.x, r.next.y]),
            )
            .ok()
        }
        _ => None,
    };
    let first = first.or_else(|| trials.first().copied()).unwrap_or(TrialResult {
        fitness: 0.0,
        rotations_left: 0.0,
        rotations_right: 0.0,
        reached: false,
        steps_used: 0,
        sensor_performance: 0.0,
        penalty_steps: 0,
    });
    (fitness, first, path)
}
