use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use evobot_core::config::Config;
use evobot_core::controller::{Controller, FailureCase, FailureInjection};
use evobot_core::estimation::{diagnose, diagnosis_text, reference_settings, run_reference, write_diagnosis_csv, Observation};
use evobot_core::evolution::{
    coevolve, ecology_run, evolve, evolve_resumable, random_weights, EcoPolicy, EvoConfig, Genome, Mode,
    ObstacleLayout, RobotTask, Session,
};
use evobot_core::experiments::{export, run_failure_distribution, run_matrix};
use evobot_core::fitness::traced_trial;
use evobot_core::genotype::{self, GenotypeError};
use evobot_core::rng;
use evobot_core::sim::SimParams;
use evobot_core::trace::{SensorTrace, TraceMeta};
use evobot_core::world::WorldConfig;

use crate::args::{Common, EvolveMode};
use crate::error::CliError;
use crate::server;

/// Effective config: defaults, then the file, then flags.
pub fn effective_config(common: &Common) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(w) = common.workers {
        cfg.evolution.workers = w;
    }
    if let Some(n) = common.pop_size {
        cfg.evolution.pop_size = n;
    }
    if let Some(n) = common.generations {
        cfg.evolution.generations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Shared preamble. Returns `None` after handling `--dump-config`.
fn prepare(common: &Common, out: &mut impl Write) -> Result<Option<Config>, CliError> {
    let cfg = effective_config(common)?;
    if common.dump_config {
        write!(out, "{}", cfg.to_toml()?).map_err(CliError::runtime)?;
        return Ok(None);
    }
    std::fs::create_dir_all(&common.out).map_err(CliError::runtime)?;
    cfg.save(&common.out.join("config.toml"))?;
    Ok(Some(cfg))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn summary(out: &mut impl Write, v: serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "{v}").map_err(CliError::runtime)
}

fn describe(e: &GenotypeError, offset: usize) -> String {
    match e {
        GenotypeError::Syntax { position, expected } => format!("col {}: expected {expected}", position + offset + 1),
        GenotypeError::Semantic { position, message } => format!("col {}: {message}", position + offset + 1),
    }
}

/// One report line per genotype; the error count is returned alongside.
pub fn parse_report(text: &str) -> (Vec<String>, usize) {
    let mut lines = Vec::new();
    let mut errors = 0;
    for (n, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let g = body.trim();
        if g.is_empty() {
            continue;
        }
        let offset = body.len() - body.trim_start().len();
        match genotype::parse(g).map_err(|e| describe(&e, offset)).and_then(|bp| {
            bp.validate().map(|_| bp).map_err(|e| format!("col 1: {e}"))
        }) {
            Ok(bp) => lines.push(format!(
                "line {}: ok parts={} joints={} neurons={} connections={}",
                n + 1,
                bp.parts.len(),
                bp.joints.len(),
                bp.neurons.len(),
                bp.connections.len()
            )),
            Err(msg) => {
                errors += 1;
                lines.push(format!("line {}: error {msg}", n + 1));
            }
        }
    }
    (lines, errors)
}

pub fn cmd_parse(file: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    let (lines, errors) = parse_report(&text);
    for l in &lines {
        writeln!(out, "{l}").map_err(CliError::runtime)?;
    }
    if errors > 0 {
        return Err(CliError::Config(format!("{errors} of {} genotypes are invalid", lines.len())));
    }
    Ok(())
}

fn weight_init(task: &RobotTask, range: f64) -> impl FnMut(usize, &mut rng::Rng) -> Genome {
    let n = task.weight_count();
    move |_, r| Genome::Weights(random_weights(n, range, r))
}

fn save_controller(task: &RobotTask, genome: &Genome, path: &Path) -> Result<(), CliError> {
    let c = task.controller_for(genome).ok_or_else(|| CliError::runtime("genome does not match the topology"))?;
    c.save(path).map_err(CliError::runtime)
}

pub fn cmd_evolve(
    common: &Common,
    mode: Option<EvolveMode>,
    checkpoint: Option<&Path>,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let Some(mut cfg) = prepare(common, out)? else { return Ok(()) };
    let mode = match (mode, cfg.evolution.mode) {
        (Some(m), _) => m,
        (None, Mode::Standard) => EvolveMode::Standard,
        (None, Mode::CoEvolution) => EvolveMode::Coevolution,
        (None, Mode::VirtualEcology) => EvolveMode::Ecology,
        (None, Mode::UserGuided) => return Err(CliError::Usage("user_guided runs through `evobot serve`".into())),
    };
    cfg.evolution.mode = match mode {
        EvolveMode::Standard => Mode::Standard,
        EvolveMode::Coevolution => Mode::CoEvolution,
        EvolveMode::Ecology => Mode::VirtualEcology,
    };
    let task = cfg.task()?;
    let dir = &common.out;
    match mode {
        EvolveMode::Standard => {
            let init = weight_init(&task, cfg.evolution.init_range);
            let eval = |g: &Genome| task.score(g);
            let (best, log) = match checkpoint {
                Some(p) => evolve_resumable(&cfg.evolution, init, &eval, p),
                None => evolve(&cfg.evolution, init, &eval),
            }
            .map_err(CliError::runtime)?;
            log.write_csv(create(&dir.join("run.csv"))?).map_err(CliError::runtime)?;
            log.write_snapshots(create(&dir.join("snapshots.ndjson"))?).map_err(CliError::runtime)?;
            save_controller(&task, &best.genome, &dir.join("best_controller.toml"))?;
            summary(
                out,
                serde_json::json!({
                    "mode": "standard",
                    "generations": log.generations.len().saturating_sub(1),
                    "best_fitness": best.fitness,
                    "best_id": best.id,
                }),
            )
        }
        EvolveMode::Coevolution => {
            let layout = ObstacleLayout {
                max_obstacles: cfg.experiment.obstacle_count,
                radius_min: cfg.world.obstacle_radius_min,
                radius_max: cfg.world.obstacle_radius_max,
                robot_radius: cfg.body.body_radius,
            };
            let cfg_b = EvoConfig {
                seed: rng::derive(cfg.evolution.seed, 1),
                ..cfg.evolution
            };
            let genes = layout.gene_count();
            let cross = |a: &Genome, b: &Genome| {
                let t = RobotTask { world: layout.apply(&task.world, b), ..task.clone() };
                t.score(a)
            };
            let r = coevolve(
                &cfg.evolution,
                &cfg_b,
                weight_init(&task, cfg.evolution.init_range),
                move |_, rr| Genome::Weights(random_weights(genes, 1.0, rr)),
                &cross,
            )
            .map_err(CliError::runtime)?;
            r.log_a.write_csv(create(&dir.join("run_robots.csv"))?).map_err(CliError::runtime)?;
            r.log_b.write_csv(create(&dir.join("run_layouts.csv"))?).map_err(CliError::runtime)?;
            save_controller(&task, &r.best_a.genome, &dir.join("best_controller.toml"))?;
            let obstacles = layout.apply(&task.world, &r.best_b.genome).obstacles;
            let text = serde_json::to_string_pretty(&obstacles).map_err(CliError::runtime)?;
            std::fs::write(dir.join("best_layout.json"), text).map_err(CliError::runtime)?;
            summary(
                out,
                serde_json::json!({
                    "mode": "coevolution",
                    "robot_fitness": r.best_a.fitness,
                    "layout_fitness": r.best_b.fitness,
                    "layout_obstacles": obstacles.len(),
                }),
            )
        }
        EvolveMode::Ecology => {
            let topo = cfg.controller.topology();
            let initial = (0..cfg.ecology.n_robots)
                .map(|k| {
                    let seed = rng::derive(cfg.ecology.seed, k as u64);
                    EcoPolicy::Network(Controller::random(topo.clone(), cfg.controller.threshold, seed))
                })
                .collect();
            let log = ecology_run(
                &cfg.ecology,
                &task.world,
                &task.body,
                &cfg.fitness.step,
                initial,
                cfg.evolution.generations,
            )
            .map_err(CliError::runtime)?;
            let mut w = csv::Writer::from_writer(create(&dir.join("ecology_epochs.csv"))?);
            for e in &log.epochs {
                w.serialize(e).map_err(CliError::runtime)?;
            }
            w.flush().map_err(CliError::runtime)?;
            let mut w = csv::Writer::from_writer(create(&dir.join("lifespans.csv"))?);
            for l in &log.lifespans {
                w.serialize(l).map_err(CliError::runtime)?;
            }
            w.flush().map_err(CliError::runtime)?;
            summary(
                out,
                serde_json::json!({
                    "mode": "ecology",
                    "epochs": log.epochs.len(),
                    "lifespans": log.lifespans.len(),
                    "outcome": log.outcome,
                }),
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    common: &Common,
    controller: Option<&Path>,
    start: usize,
    failure: Option<&str>,
    severity: Option<f64>,
    onset: usize,
    failure_seed: u64,
    full_length: bool,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let Some(cfg) = prepare(common, out)? else { return Ok(()) };
    let task = cfg.task()?;
    let (mut c, controller_id) = match controller {
        Some(p) => (
            Controller::load(p).map_err(CliError::config)?,
            p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        ),
        None => {
            let c = Controller::random(cfg.controller.topology(), cfg.controller.threshold, cfg.evolution.seed);
            c.save(&common.out.join("controller.toml")).map_err(CliError::runtime)?;
            (c, "random".to_string())
        }
    };
    if let Some(name) = failure {
        let case: FailureCase = name.parse().map_err(CliError::Usage)?;
        let f = FailureInjection::new(case, onset, severity.unwrap_or(FailureInjection::DEFAULT_SEVERITY), failure_seed);
        f.validate().map_err(CliError::Config)?;
        c.failure = Some(f);
    }
    let s = task.world.corner_start(start, &task.body);
    let trial_seed = rng::derive(cfg.evolution.seed, start as u64);
    let meta = TraceMeta {
        controller_id,
        world_seed: cfg.world.seed,
        terrain: cfg.world.terrain,
        obstacles: cfg.world.obstacles,
        start: [s.x, s.y, s.heading],
        trial_seed,
        dt: cfg.fitness.step.dt(),
    };
    let params = SimParams::ideal();
    let (result, mut trace) = traced_trial(&task.world, &task.body, &c, &params, &cfg.fitness, &s, trial_seed, meta.clone())
        .map_err(CliError::runtime)?;
    if full_length {
        let settings = reference_settings(cfg.fitness.max_steps, trial_seed, cfg.fitness.step);
        trace = run_reference(&c, &params, &task.world, &task.body, &s, &settings, meta).trace;
    }
    trace.save(&common.out.join("trajectory.csv")).map_err(CliError::runtime)?;
    summary(out, serde_json::to_value(&result).map_err(CliError::runtime)?)
}

pub fn cmd_diagnose(
    common: &Common,
    controllers: &[PathBuf],
    traces: &[PathBuf],
    out: &mut impl Write,
) -> Result<(), CliError> {
    if controllers.len() != 1 && controllers.len() != traces.len() {
        return Err(CliError::Usage(format!(
            "{} controllers for {} traces; give one per trace or a single shared one",
            controllers.len(),
            traces.len()
        )));
    }
    let Some(cfg) = prepare(common, out)? else { return Ok(()) };
    let mut observations = Vec::with_capacity(traces.len());
    for (k, path) in traces.iter().enumerate() {
        let trace = SensorTrace::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cpath = &controllers[k.min(controllers.len() - 1)];
        let controller = Controller::load(cpath).map_err(|e| CliError::Config(format!("{}: {e}", cpath.display())))?;
        let world = WorldConfig {
            terrain: trace.meta.terrain,
            obstacles: trace.meta.obstacles,
            seed: trace.meta.world_seed,
            robot_radius: cfg.body.body_radius,
            ..cfg.world.clone()
        }
        .build()
        .map_err(CliError::config)?;
        let settings = reference_settings(trace.len(), trace.meta.trial_seed, cfg.fitness.step);
        observations.push(Observation { trace, controller, world, body: cfg.body.clone(), settings });
    }
    let ranked = diagnose(&observations, &cfg.evolution, &cfg.estimation, &SimParams::ideal()).map_err(CliError::runtime)?;
    write_diagnosis_csv(&ranked, create(&common.out.join("diagnosis.csv"))?).map_err(CliError::runtime)?;
    write!(out, "{}", diagnosis_text(&ranked)).map_err(CliError::runtime)
}

pub fn cmd_experiment(common: &Common, plot_data: bool, out: &mut impl Write) -> Result<(), CliError> {
    let Some(cfg) = prepare(common, out)? else { return Ok(()) };
    let plan = cfg.plan();
    let mut report = run_matrix(&plan, &cfg.evolution).map_err(CliError::runtime)?;
    if cfg.experiment.failures_per_case > 0 {
        let d = run_failure_distribution(&plan, &cfg.evolution, &cfg.experiment.failure_env, cfg.experiment.failures_per_case)
            .map_err(CliError::runtime)?;
        report.failures = Some(d);
    }
    let files = export(&report, &common.out, plot_data).map_err(CliError::runtime)?;
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| serde_json::json!({ "env": r.env, "best_evolved": r.best_evolved, "mean_fitness": r.mean_fitness }))
        .collect();
    summary(out, serde_json::json!({ "files": files, "environments": rows }))
}

pub fn cmd_serve(common: &Common, host: &str, port: u16, timeout_secs: f64, out: &mut impl Write) -> Result<(), CliError> {
    let Some(mut cfg) = prepare(common, out)? else { return Ok(()) };
    if !(timeout_secs > 0.0) {
        return Err(CliError::Usage("--timeout-secs must be positive".into()));
    }
    cfg.evolution.mode = Mode::UserGuided;
    let task = cfg.task()?;
    let session_file = common.out.join("session.json");
    let session = if session_file.exists() {
        Session::load(&session_file).map_err(CliError::config)?
    } else {
        Session::new(format!("session-{}", cfg.evolution.seed), cfg.evolution, task).map_err(CliError::runtime)?
    };
    let state = server::AppState::new(session, std::time::Duration::from_secs_f64(timeout_secs), Some(session_file));
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await.map_err(CliError::runtime)?;
        let addr = listener.local_addr().map_err(CliError::runtime)?;
        summary(out, serde_json::json!({ "listening": addr.to_string() }))?;
        out.flush().map_err(CliError::runtime)?;
        server::serve(listener, state).await.map_err(CliError::runtime)
    })
}
