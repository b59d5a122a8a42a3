//! Generational genetic algorithm and the regimes built on it: standard
//! evolution, co-evolution against obstacle layouts, a shared-world
//! ecology, and user-guided selection.
//!
//! Every generation draws from its own stream derived from `(seed,
//! generation)`, and fitness values are merged by population index, so the
//! result does not depend on the worker count and a run can be resumed
//! from a checkpoint.

mod coevolution;
mod ecology;
mod session;
mod task;

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genotype::{self, Genotype, MutationRates};
use crate::rng;

pub use coevolution::{coevolve, CoevolutionResult, ObstacleLayout};
pub use ecology::{
    ecology_run, EcoPolicy, EcologyConfig, EcologyEpoch, EcologyLog, EcologyOutcome, Lifespan,
};
pub use session::{Candidate, HistoryEntry, Session, SessionError, SessionStatus, MAX_TRAJECTORY_POINTS};
pub use task::RobotTask;

const BREED_SALT: u64 = 0xb4ee_d000;

#[derive(Debug, Error)]
pub enum EvoError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Standard,
    CoEvolution,
    VirtualEcology,
    UserGuided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Genome {
    Weights(Vec<f64>),
    Genotype(Genotype),
}

impl Genome {
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            Genome::Weights(w) => Some(w),
            Genome::Genotype(_) => None,
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        match self {
            Genome::Weights(w) => serde_json::json!({ "weights": w }),
            Genome::Genotype(g) => serde_json::json!({ "genotype": g.as_str() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub fitness: Option<f64>,
    /// Ids of the parents; empty for the initial population.
    pub parents: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvoConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub tournament_k: usize,
    pub elitism_count: usize,
    pub mutation_sigma: f64,
    /// Per-gene mutation probability for weight genomes.
    pub mutation_rate: f64,
    pub crossover_prob: f64,
    pub seed: u64,
    pub mode: Mode,
    pub lifetime_learning: bool,
    /// Evaluation threads; 0 uses every core.
    pub workers: usize,
    /// Generations without improvement before a stagnation warning.
    pub stagnation_window: usize,
    /// Initial weights are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            pop_size: 20,
            generations: 50,
            tournament_k: 3,
            elitism_count: 1,
            mutation_sigma: 0.3,
            mutation_rate: 0.2,
            crossover_prob: 0.5,
            seed: 0,
            mode: Mode::Standard,
            lifetime_learning: false,
            workers: 0,
            stagnation_window: 20,
            init_range: 1.0,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        let bad = |m: String| Err(EvoError::Config(m));
        if self.pop_size < 2 {
            return bad(format!("pop_size must be >= 2, got {}", self.pop_size));
        }
        if self.tournament_k == 0 {
            return bad("tournament_k must be >= 1".into());
        }
        if self.elitism_count == 0 || self.elitism_count > self.pop_size {
            return bad(format!(
                "elitism_count must lie in 1..={}, got {}",
                self.pop_size, self.elitism_count
            ));
        }
        if !(self.mutation_sigma >= 0.0) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_sigma must be >= 0 and mutation_rate in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob must lie in [0, 1]".into());
        }
        if !(self.init_range >= 0.0) {
            return bad("init_range must be >= 0".into());
        }
        Ok(())
    }

    fn genotype_rates(&self) -> MutationRates {
        MutationRates {
            weight_sigma: self.mutation_sigma,
            ..MutationRates::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub min: f64,
    /// Evaluations performed so far, cumulative.
    pub evaluations: usize,
    pub best_id: u64,
    pub best_genome: Option<Genome>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub generations: Vec<GenerationStats>,
}

impl RunLog {
    pub fn best_series(&self) -> Vec<f64> {
        self.generations.iter().map(|g| g.best).collect()
    }

    /// `generation,best,mean,min,evaluations`
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation", "best", "mean", "min", "evaluations"])?;
        for g in &self.generations {
            w.write_record([
                g.generation.to_string(),
                g.best.to_string(),
                g.mean.to_string(),
                g.min.to_string(),
                g.evaluations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// One JSON record per generation holding the best genome.
    pub fn write_snapshots(&self, mut out: impl Write) -> std::io::Result<()> {
        for g in &self.generations {
            let rec = serde_json::json!({
                "generation": g.generation,
                "id": g.best_id,
                "fitness": g.best,
                "genome": g.best_genome.as_ref().map(Genome::snapshot),
            });
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }
}

/// Population state between generations. Serializable so long runs can be
/// checkpointed and resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoState {
    pub cfg: EvoConfig,
    pub generation: usize,
    pub population: Vec<Individual>,
    pub next_id: u64,
    pub evaluations: usize,
    pub log: RunLog,
    stagnant: usize,
}

/// Rank order, best first; ties keep population order, NaN sorts last.
fn ranking(pop: &[Individual]) -> Vec<usize> {
    let key = |i: usize| pop[i].fitness.filter(|f| !f.is_nan()).unwrap_or(f64::NEG_INFINITY);
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    idx
}

pub fn random_weights(len: usize, range: f64, rng: &mut rng::Rng) -> Vec<f64> {
    (0..len).map(|_| if range > 0.0 { rng.random_range(-range..=range) } else { 0.0 }).collect()
}

impl EvoState {
    /// Generation 0 from `init(index, rng)`.
    pub fn new(
        cfg: EvoConfig,
        mut init: impl FnMut(usize, &mut rng::Rng) -> Genome,
    ) -> Result<EvoState, EvoError> {
        cfg.validate()?;
        let mut rng = rng::stream(cfg.seed, BREED_SALT);
        let population = (0..cfg.pop_size)
            .map(|i| Individual {
                id: i as u64,
                genome: init(i, &mut rng),
                fitness: None,
                parents: Vec::new(),
            })
            .collect();
        Ok(EvoState {
            cfg,
            generation: 0,
            population,
            next_id: cfg.pop_size as u64,
            evaluations: 0,
            log: RunLog::default(),
            stagnant: 0,
        })
    }

    pub fn with_weights(cfg: EvoConfig, len: usize) -> Result<EvoState, EvoError> {
        let range = cfg.init_range;
        EvoState::new(cfg, |_, rng| Genome::Weights(random_weights(len, range, rng)))
    }

    pub fn best(&self) -> &Individual {
        &self.population[ranking(&self.population)[0]]
    }

    /// Forget stored fitness so the next `evaluate` scores everyone again.
    pub fn invalidate(&mut self) {
        self.population.iter_mut().for_each(|i| i.fitness = None);
    }

    /// Score every unscored individual and append a log row.
    pub fn evaluate<F>(&mut self, pool: Option<&rayon::ThreadPool>, eval: &F)
    where
        F: Fn(&Genome) -> f64 + Sync,
    {
        let todo: Vec<usize> = (0..self.population.len())
            .filter(|&i| self.population[i].fitness.is_none())
            .collect();
        let pop = &self.population;
        let run = || -> Vec<f64> { todo.par_iter().map(|&i| eval(&pop[i].genome)).collect() };
        let scores = match pool {
            Some(p) => p.install(run),
            None => todo.iter().map(|&i| eval(&pop[i].genome)).collect(),
        };
        for (&i, f) in todo.iter().zip(scores) {
            self.population[i].fitness = Some(f);
        }
        self.evaluations += todo.len();
        self.record();
    }

    fn record(&mut self) {
        let fits: Vec<f64> = self.population.iter().map(|i| i.fitness.unwrap_or(f64::NAN)).collect();
        let best = self.best().clone();
        let best_f = best.fitness.unwrap_or(f64::NAN);
        let prev = self.log.generations.last().map(|g| g.best);
        match prev {
            Some(p) if best_f <= p => self.stagnant += 1,
            _ => self.stagnant = 0,
        }
        if self.cfg.stagnation_window > 0 && self.stagnant == self.cfg.stagnation_window {
            log::warn!(
                "stagnation: best fitness {best_f} unchanged for {} generations",
                self.stagnant
            );
        }
        self.log.generations.push(GenerationStats {
            generation: self.generation,
            best: best_f,
            mean: fits.iter().sum::<f64>() / fits.len() as f64,
            min: fits.iter().cloned().fold(f64::INFINITY, f64::min),
            evaluations: self.evaluations,
            best_id: best.id,
            best_genome: Some(best.genome),
        });
    }

    fn tournament(&self, rng: &mut rng::Rng) -> usize {
        let n = self.population.len();
        let key = |i: usize| self.population[i].fitness.filter(|f| !f.is_nan()).unwrap_or(f64::NEG_INFINITY);
        let mut best = rng.random_range(0..n);
        for _ in 1..self.cfg.tournament_k {
            let c = rng.random_range(0..n);
            if key(c) > key(best) || (key(c) == key(best) && c < best) {
                best = c;
            }
        }
        best
    }

    fn mutate(&self, g: &Genome, rng: &mut rng::Rng) -> Genome {
        match g {
            Genome::Weights(w) => {
                let normal = Normal::new(0.0, self.cfg.mutation_sigma.max(0.0)).expect("finite sigma");
                Genome::Weights(
                    w.iter()
                        .map(|&x| {
                            if rng.random_bool(self.cfg.mutation_rate) {
                                x + normal.sample(rng)
                            } else {
                                x
                            }
                        })
                        .collect(),
                )
            }
            Genome::Genotype(gt) => Genome::Genotype(genotype::mutate(gt, &self.cfg.genotype_rates(), rng.random())),
        }
    }

    fn cross(&self, a: &Genome, b: &Genome, rng: &mut rng::Rng) -> Genome {
        match (a, b) {
            (Genome::Weights(x), Genome::Weights(y)) if x.len() == y.len() => Genome::Weights(
                x.iter()
                    .zip(y)
                    .map(|(&p, &q)| if rng.random_bool(0.5) { p } else { q })
                    .collect(),
            ),
            (Genome::Genotype(x), Genome::Genotype(y)) => Genome::Genotype(genotype::crossover(x, y, rng.random())),
            _ => a.clone(),
        }
    }

    /// Make one child from the given parent indices.
    fn offspring(&mut self, pa: usize, pb: usize, rng: &mut rng::Rng) -> Individual {
        let a = &self.population[pa];
        let b = &self.population[pb];
        let (genome, parents) = if rng.random_bool(self.cfg.crossover_prob) {
            (self.cross(&a.genome, &b.genome, rng), vec![a.id, b.id])
        } else {
            (a.genome.clone(), vec![a.id])
        };
        let genome = self.mutate(&genome, rng);
        let id = self.next_id;
        self.next_id += 1;
        Individual {
            id,
            genome,
            fitness: None,
            parents,
        }
    }

    fn generation_rng(&self) -> rng::Rng {
        rng::stream(rng::derive(self.cfg.seed, BREED_SALT), self.generation as u64 + 1)
    }

    /// Elites plus tournament-selected offspring.
    pub fn breed(&mut self) {
        let mut rng = self.generation_rng();
        let order = ranking(&self.population);
        let mut next: Vec<Individual> = order[..self.cfg.elitism_count]
            .iter()
            .map(|&i| self.population[i].clone())
            .collect();
        while next.len() < self.cfg.pop_size {
            let pa = self.tournament(&mut rng);
            let pb = self.tournament(&mut rng);
            let child = self.offspring(pa, pb, &mut rng);
            next.push(child);
        }
        self.population = next;
        self.generation += 1;
    }

    /// Next generation bred only from the listed population indices:
    /// elites are the chosen individuals, the rest are offspring of parents
    /// drawn uniformly from them.
    pub fn breed_from(&mut self, chosen: &[usize]) {
        let mut rng = self.generation_rng();
        let mut next: Vec<Individual> = chosen
            .iter()
            .take(self.cfg.elitism_count.min(self.cfg.pop_size))
            .map(|&i| self.population[i].clone())
            .collect();
        while next.len() < self.cfg.pop_size {
            let pa = chosen[rng.random_range(0..chosen.len())];
            let pb = chosen[rng.random_range(0..chosen.len())];
            let child = self.offspring(pa, pb, &mut rng);
            next.push(child);
        }
        self.population = next;
        self.generation += 1;
    }

    pub fn save(&self, path: &Path) -> Result<(), EvoError> {
        let text = serde_json::to_string(self).map_err(|e| EvoError::Checkpoint(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EvoState, EvoError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| EvoError::Checkpoint(e.to_string()))
    }
}

/// Thread pool for `workers` threads; `None` means evaluate inline.
pub fn worker_pool(workers: usize) -> Result<Option<rayon::ThreadPool>, EvoError> {
    if workers == 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| EvoError::Config(format!("thread pool: {e}")))
}

/// Run a state to `cfg.generations`, checkpointing after every generation
/// when a path is given.
pub fn run_state<F>(state: &mut EvoState, eval: &F, checkpoint: Option<&Path>) -> Result<(), EvoError>
where
    F: Fn(&Genome) -> f64 + Sync,
{
    let pool = worker_pool(state.cfg.workers)?;
    if state.log.generations.len() <= state.generation {
        state.evaluate(pool.as_ref(), eval);
        if let Some(p) = checkpoint {
            state.save(p)?;
        }
    }
    while state.generation < state.cfg.generations {
        state.breed();
        state.evaluate(pool.as_ref(), eval);
        if let Some(p) = checkpoint {
            state.save(p)?;
        }
    }
    Ok(())
}

/// Generational GA maximising `eval`. Returns the best individual of the
/// final generation (elitism makes it the best seen) and the run log.
pub fn evolve<F>(
    cfg: &EvoConfig,
    init: impl FnMut(usize, &mut rng::Rng) -> Genome,
    eval: &F,
) -> Result<(Individual, RunLog), EvoError>
where
    F: Fn(&Genome) -> f64 + Sync,
{
    let mut state = EvoState::new(*cfg, init)?;
    run_state(&mut state, eval, None)?;
    Ok((state.best().clone(), state.log))
}

/// Like [`evolve`] but resumes from `checkpoint` when it exists and keeps
/// it current. The configured generation count may be raised on resume.
pub fn evolve_resumable<F>(
    cfg: &EvoConfig,
    init: impl FnMut(usize, &mut rng::Rng) -> Genome,
    eval: &F,
    checkpoint: &Path,
) -> Result<(Individual, RunLog), EvoError>
where
    F: Fn(&Genome) -> f64 + Sync,
{
    let mut state = if checkpoint.exists() {
        let mut s = EvoState::load(checkpoint)?;
        if s.cfg.seed != cfg.seed || s.cfg.pop_size != cfg.pop_size {
            return Err(EvoError::Checkpoint("checkpoint was written by a different run".into()));
        }
        s.cfg.generations = cfg.generations;
        s.cfg.workers = cfg.workers;
        s
    } else {
        EvoState::new(*cfg, init)?
    };
    run_state(&mut state, eval, Some(checkpoint))?;
    Ok((state.best().clone(), state.log))
}

#[cfg(test)]
mod tests;
