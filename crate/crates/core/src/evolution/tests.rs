use std::sync::Mutex;

use super::*;
use crate::controller::{Controller, ControllerConfig, Topology};
use crate::fitness::{run_trial, FitnessConfig};
use crate::genotype::KHEPERA_GENOTYPE;
use crate::sim::SimParams;
use crate::world::{make_world, RobotBody, StepConfig, TerrainKind};

fn sphere(g: &Genome) -> f64 {
    -g.weights().unwrap().iter().map(|x| x * x).sum::<f64>()
}

fn cfg(seed: u64) -> EvoConfig {
    EvoConfig {
        pop_size: 16,
        generations: 50,
        seed,
        ..EvoConfig::default()
    }
}

fn init5(_: usize, rng: &mut crate::rng::Rng) -> Genome {
    Genome::Weights(random_weights(5, 3.0, rng))
}

fn flat_task(obstacles: usize, seed: u64) -> RobotTask {
    let mut t = RobotTask::new(
        make_world(TerrainKind::Flat, obstacles, seed).unwrap(),
        RobotBody::default(),
        FitnessConfig {
            max_steps: 120,
            ..FitnessConfig::default()
        },
        ControllerConfig {
            hidden: 2,
            ..ControllerConfig::default()
        },
    );
    t.starts = vec![0, 2];
    t
}

#[test]
fn sphere_improves() {
    for seed in 0..5 {
        let (best, log) = evolve(&cfg(seed), init5, &sphere).unwrap();
        assert!(best.fitness.unwrap() > log.generations[0].best);
        assert_eq!(log.generations.len(), 51);
    }
}

#[test]
fn best_fitness_never_drops() {
    for seed in 0..20 {
        let (_, log) = evolve(&cfg(seed), init5, &sphere).unwrap();
        for w in log.generations.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
    }
}

#[test]
fn full_elitism_freezes_population() {
    let c = EvoConfig {
        elitism_count: 16,
        generations: 4,
        ..cfg(3)
    };
    let mut s = EvoState::new(c, init5).unwrap();
    s.evaluate(None, &sphere);
    s.breed();
    let after_one: Vec<Genome> = s.population.iter().map(|i| i.genome.clone()).collect();
    for _ in 0..3 {
        s.breed();
        s.evaluate(None, &sphere);
        let now: Vec<Genome> = s.population.iter().map(|i| i.genome.clone()).collect();
        assert_eq!(now, after_one);
    }
}

#[test]
fn population_size_is_conserved() {
    let mut s = EvoState::new(cfg(1), init5).unwrap();
    for _ in 0..10 {
        s.evaluate(None, &sphere);
        s.breed();
        assert_eq!(s.population.len(), 16);
    }
}

#[test]
fn worker_count_does_not_change_the_log() {
    let logs: Vec<String> = [1, 4, 8]
        .iter()
        .map(|&w| {
            let c = EvoConfig { workers: w, ..cfg(9) };
            evolve(&c, init5, &sphere).unwrap().1.to_csv_string()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[0], logs[2]);
    assert!(logs[0].starts_with("generation,best,mean,min,evaluations\n0,"));
}

#[test]
fn tiny_population_is_rejected() {
    let c = EvoConfig { pop_size: 1, ..cfg(0) };
    assert!(matches!(evolve(&c, init5, &sphere), Err(EvoError::Config(_))));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("run.json");
    let full = evolve(&cfg(4), init5, &sphere).unwrap();
    let half = EvoConfig { generations: 20, ..cfg(4) };
    evolve_resumable(&half, init5, &sphere, &ck).unwrap();
    let resumed = evolve_resumable(&cfg(4), init5, &sphere, &ck).unwrap();
    assert_eq!(resumed.1, full.1);
    assert_eq!(resumed.0, full.0);
}

#[test]
fn snapshots_are_json_lines() {
    let (_, log) = evolve(&EvoConfig { generations: 3, ..cfg(2) }, init5, &sphere).unwrap();
    let mut buf = Vec::new();
    log.write_snapshots(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["genome"]["weights"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn genotype_genomes_evolve_and_stay_valid() {
    let task = flat_task(0, 0);
    let seed_genotype = Genotype::new(KHEPERA_GENOTYPE).unwrap();
    let c = EvoConfig {
        pop_size: 8,
        generations: 5,
        ..EvoConfig::default()
    };
    let (best, log) = evolve(&c, |_, _| Genome::Genotype(seed_genotype.clone()), &|g: &Genome| task.score(g)).unwrap();
    assert_eq!(log.generations.len(), 6);
    match best.genome {
        Genome::Genotype(g) => assert!(Genotype::new(g.as_str()).is_ok()),
        _ => panic!("genome type changed"),
    }
}

#[test]
fn learning_off_leaves_weights_alone() {
    let task = flat_task(4, 1);
    let mut rng = crate::rng::seeded(2);
    let weights = random_weights(task.weight_count(), 1.0, &mut rng);
    let mut c = task.controller_for(&Genome::Weights(weights.clone())).unwrap();
    let start = task.world.corner_start(0, &task.body);
    run_trial(&task.world, &task.body, &mut c, &SimParams::ideal(), &task.fitness, &start, 0, |_| {}).unwrap();
    assert_eq!(c.weights(), &weights[..]);

    let mut learning = task.clone();
    learning.lifetime_learning = true;
    let mut c = learning.controller_for(&Genome::Weights(weights.clone())).unwrap();
    run_trial(&task.world, &task.body, &mut c, &SimParams::ideal(), &task.fitness, &start, 0, |_| {}).unwrap();
    assert_ne!(c.weights(), &weights[..]);
}

fn layout() -> ObstacleLayout {
    ObstacleLayout {
        max_obstacles: 6,
        radius_min: 0.6,
        radius_max: 1.5,
        robot_radius: RobotBody::default().body_radius,
    }
}

#[test]
fn layouts_respect_placement_rule() {
    let w = make_world(TerrainKind::Flat, 0, 0).unwrap();
    let l = layout();
    assert!(l.apply(&w, &l.empty_genome()).obstacles.is_empty());
    let mut rng = crate::rng::seeded(6);
    for _ in 0..200 {
        let g = random_weights(l.gene_count(), 1.0, &mut rng);
        let obs = l.decode(&w, &g);
        assert!(obs.len() <= 6);
        for (k, o) in obs.iter().enumerate() {
            assert!(w.admits(o, &obs[..k], l.robot_radius));
        }
    }
}

#[test]
fn frozen_opponent_reduces_to_evolve() {
    let task = flat_task(0, 0);
    let l = layout();
    let n = task.weight_count();
    let cfg_a = EvoConfig {
        pop_size: 8,
        generations: 6,
        seed: 5,
        ..EvoConfig::default()
    };
    let cfg_b = EvoConfig { generations: 0, ..cfg_a };
    let cross = |a: &Genome, b: &Genome| {
        let mut t = task.clone();
        t.world = l.apply(&task.world, b);
        t.score(a)
    };
    let init_a = |_: usize, rng: &mut crate::rng::Rng| Genome::Weights(random_weights(n, 1.0, rng));
    let co = coevolve(&cfg_a, &cfg_b, init_a, |_, _| l.empty_genome(), &cross).unwrap();
    let (_, plain) = evolve(&cfg_a, init_a, &|g: &Genome| task.score(g)).unwrap();
    assert_eq!(co.log_a, plain);
    assert!(co.log_b.generations.is_empty());
}

#[test]
fn coevolution_scores_are_antisymmetric_and_elitist() {
    let task = flat_task(0, 0);
    let l = layout();
    let n = task.weight_count();
    let seen = Mutex::new(Vec::new());
    let cross = |a: &Genome, b: &Genome| {
        let mut t = task.clone();
        t.world = l.apply(&task.world, b);
        let f = t.score(a);
        seen.lock().unwrap().push((a.clone(), b.clone(), f));
        f
    };
    let c = EvoConfig {
        pop_size: 6,
        generations: 3,
        seed: 1,
        ..EvoConfig::default()
    };
    let res = coevolve(
        &c,
        &c,
        |_, rng| Genome::Weights(random_weights(n, 1.0, rng)),
        |_, rng| Genome::Weights(random_weights(l.gene_count(), 1.0, rng)),
        &cross,
    )
    .unwrap();
    let seen = seen.into_inner().unwrap();
    let fb = res.best_b.fitness.unwrap();
    let pair = seen.iter().find(|(_, b, f)| *b == res.best_b.genome && 1.0 - f == fb);
    assert!(pair.is_some());
    assert_eq!(res.log_a.generations.len(), 4);
    assert_eq!(res.log_b.generations.len(), 4);
}

#[test]
fn arms_race_finds_harder_layouts() {
    let task = flat_task(0, 0);
    let l = layout();
    let n = task.weight_count();
    let cross = |a: &Genome, b: &Genome| {
        let mut t = task.clone();
        t.world = l.apply(&task.world, b);
        t.score(a)
    };
    let c = EvoConfig {
        pop_size: 10,
        generations: 6,
        seed: 3,
        ..EvoConfig::default()
    };
    let init_a = |_: usize, rng: &mut crate::rng::Rng| Genome::Weights(random_weights(n, 1.0, rng));
    let res = coevolve(&c, &c, init_a, |_, rng| Genome::Weights(random_weights(l.gene_count(), 1.0, rng)), &cross)
        .unwrap();
    let gen0 = EvoState::new(c, init_a).unwrap();
    let mean = |b: &Genome| gen0.population.iter().map(|i| cross(&i.genome, b)).sum::<f64>() / 10.0;
    assert!(mean(&res.best_b.genome) < mean(&l.empty_genome()));
}

fn eco_world() -> crate::world::World {
    make_world(TerrainKind::Flat, 0, 0).unwrap()
}

#[test]
fn no_drain_means_no_deaths() {
    let c = EcologyConfig {
        n_robots: 4,
        energy_drain: 0.0,
        epoch_steps: 50,
        ..EcologyConfig::default()
    };
    let policies = (0..4)
        .map(|k| EcoPolicy::Network(Controller::random(Topology::layered(2), 1.0, k)))
        .collect();
    let log = ecology_run(&c, &eco_world(), &RobotBody::default(), &StepConfig::default(), policies, 4).unwrap();
    assert!(log.census.iter().all(|&(_, alive, deaths, _)| alive == 4 && deaths == 0));
    assert_eq!(log.outcome, EcologyOutcome::Completed);
}

#[test]
fn spinner_starves_before_seeker() {
    let c = EcologyConfig {
        n_robots: 2,
        energy_init: 100.0,
        energy_drain: 1.0,
        energy_gain: 60.0,
        epoch_steps: 400,
        ..EcologyConfig::default()
    };
    let policies = vec![EcoPolicy::Constant(1.0, 1.0), EcoPolicy::Constant(-1.0, 1.0)];
    let log = ecology_run(&c, &eco_world(), &RobotBody::default(), &StepConfig::default(), policies, 1).unwrap();
    // spinner: 100 energy at 1 per step, gone after its 100th step
    assert_eq!(log.lifespans[1].died, Some(99));
    assert_eq!(log.lifespans[1].targets_reached, 0);
    assert!(log.lifespans[0].targets_reached >= 1);
    assert!(log.lifespans[0].died.map_or(true, |d| d > 99));
}

#[test]
fn census_is_conserved() {
    let c = EcologyConfig {
        n_robots: 5,
        energy_init: 40.0,
        epoch_steps: 60,
        seed: 3,
        ..EcologyConfig::default()
    };
    let policies = (0..5)
        .map(|k| EcoPolicy::Network(Controller::random(Topology::layered(2), 1.0, k + 10)))
        .collect();
    let log = ecology_run(&c, &eco_world(), &RobotBody::default(), &StepConfig::default(), policies, 5).unwrap();
    assert!(log.census.iter().any(|&(_, _, d, _)| d > 0));
    for &(_, alive, deaths, respawns) in &log.census {
        assert_eq!(alive + deaths, 5 + respawns);
    }
    let children: Vec<_> = log.lifespans.iter().filter(|l| l.parent.is_some()).collect();
    assert_eq!(children.len(), log.census.last().unwrap().3);
}

#[test]
fn everyone_starving_ends_in_extinction() {
    let c = EcologyConfig {
        n_robots: 2,
        energy_init: 10.0,
        epoch_steps: 50,
        ..EcologyConfig::default()
    };
    let policies = vec![EcoPolicy::Constant(0.0, 0.0), EcoPolicy::Constant(-1.0, 1.0)];
    let log = ecology_run(&c, &eco_world(), &RobotBody::default(), &StepConfig::default(), policies, 3).unwrap();
    assert_eq!(log.outcome, EcologyOutcome::ExtinctionEnd { step: 9 });
}

fn session_cfg() -> EvoConfig {
    EvoConfig {
        pop_size: 8,
        mode: Mode::UserGuided,
        seed: 11,
        ..EvoConfig::default()
    }
}

#[test]
fn unknown_selection_is_rejected() {
    let mut s = Session::new("s", session_cfg(), flat_task(0, 0)).unwrap();
    let before = s.candidates().to_vec();
    assert!(matches!(s.select(&[9999]), Err(SessionError::InvalidSelection(_))));
    assert!(matches!(s.select(&[]), Err(SessionError::InvalidSelection(_))));
    assert_eq!(s.generation(), 0);
    assert_eq!(s.candidates(), &before[..]);
    assert_eq!(s.status(), SessionStatus::AwaitingSelection);
}

#[test]
fn session_requires_user_guided_mode() {
    let c = EvoConfig {
        mode: Mode::Standard,
        ..session_cfg()
    };
    assert!(Session::new("s", c, flat_task(0, 0)).is_err());
}

#[test]
fn selecting_everyone_keeps_all_parents_eligible() {
    let mut s = Session::new("s", session_cfg(), flat_task(0, 0)).unwrap();
    let ids: Vec<u64> = s.candidates().iter().map(|c| c.id).collect();
    assert_eq!(s.select(&ids).unwrap(), 1);
    assert_eq!(s.candidates().len(), 8);
    let parents: std::collections::BTreeSet<u64> =
        s.candidates().iter().flat_map(|c| c.parents.clone()).collect();
    assert!(parents.len() > 1);
    assert!(s.candidates().iter().all(|c| c.trajectory.len() <= MAX_TRAJECTORY_POINTS));
}

#[test]
fn favouring_left_wheel_raises_its_rotations() {
    let mut s = Session::new("s", session_cfg(), flat_task(0, 0)).unwrap();
    let mean = |s: &Session| s.candidates().iter().map(|c| c.rotations_l).sum::<f64>() / 8.0;
    let mut prev = mean(&s);
    for _ in 0..5 {
        let fav = s
            .candidates()
            .iter()
            .max_by(|a, b| a.rotations_l.total_cmp(&b.rotations_l))
            .unwrap()
            .id;
        s.select(&[fav]).unwrap();
        let now = mean(&s);
        assert!(now >= prev, "{now} < {prev}");
        prev = now;
    }
}

#[test]
fn session_survives_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("session.json");
    let mut s = Session::new("s", session_cfg(), flat_task(0, 0)).unwrap();
    let fav = s.candidates()[0].id;
    s.select(&[fav]).unwrap();
    assert_eq!(s.pause().to_string(), SessionError::SelectionTimeout.to_string());
    assert_eq!(s.status(), SessionStatus::Paused);
    s.save(&p).unwrap();
    let mut back = Session::load(&p).unwrap();
    assert_eq!(back.candidates(), s.candidates());
    assert_eq!(back.history(), s.history());
    let id = back.candidates()[1].id;
    s.select(&[id]).unwrap();
    back.select(&[id]).unwrap();
    assert_eq!(back.candidates(), s.candidates());
    assert_eq!(back.status(), SessionStatus::AwaitingSelection);
}
