use super::*;
use crate::controller::{ControllerConfig, Topology};
use crate::fitness::FitnessConfig;
use crate::world::{make_world, StepConfig, TerrainKind};

fn meta(id: &str, s: &RobotState) -> TraceMeta {
    TraceMeta {
        controller_id: id.into(),
        world_seed: 3,
        terrain: TerrainKind::Bumpy,
        obstacles: 6,
        start: [s.x, s.y, s.heading],
        trial_seed: 0,
        dt: StepConfig::default().dt(),
    }
}

fn observe(c: &Controller, params: &SimParams, corner: usize, steps: usize) -> Observation {
    let w = make_world(TerrainKind::Bumpy, 6, 3).unwrap();
    let body = RobotBody::default();
    let s = w.corner_start(corner, &body);
    let settings = reference_settings(steps, corner as u64, StepConfig::default());
    run_reference(c, params, &w, &body, &s, &settings, meta("c", &s))
}

fn random_params(rng: &mut rng::Rng) -> SimParams {
    let case = FailureCase::ALL[rng.random_range(0..9)];
    SimParams {
        motor_gain_left: rng.random_range(0.0..2.0),
        motor_gain_right: rng.random_range(0.0..2.0),
        sensor_gains: std::array::from_fn(|_| rng.random_range(0.0..2.0)),
        slope_gain: rng.random_range(0.0..2.0),
        failure_hypothesis: FailureInjection::new(case, rng.random_range(0..80), rng.random_range(0.0..1.0), rng.random()),
    }
}

fn small_evo(seed: u64) -> EvoConfig {
    EvoConfig {
        pop_size: 12,
        generations: 12,
        seed,
        ..EvoConfig::default()
    }
}

#[test]
fn true_params_explain_their_own_traces() {
    let mut rng = rng::seeded(1);
    for k in 0..20 {
        let p = random_params(&mut rng);
        let c = Controller::random(Topology::layered(4), 1.0, k);
        let obs = vec![observe(&c, &p, k as usize % 4, 80), observe(&c, &p, (k as usize + 1) % 4, 80)];
        let d = discrepancy(&obs, &p).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.per_controller, vec![0.0, 0.0]);
    }
}

#[test]
fn dropping_one_sensor_gain_costs_its_channel() {
    let t = Topology::layered(0);
    let mut c = Controller::random(t.clone(), 1e9, 5);
    for k in 0..10 {
        for o in 0..2 {
            c.weights_mut()[t.edge_index(k, t.output_node(o)).unwrap()] = 0.0;
        }
    }
    let truth = SimParams::ideal();
    let obs = vec![observe(&c, &truth, 0, 120)];
    let rows = &obs[0].trace.rows;
    let signal = |k: usize| rows.iter().map(|r| r.s[k].abs()).sum::<f64>();
    let k = (0..10).max_by(|&a, &b| signal(a).total_cmp(&signal(b))).unwrap();
    let mut cand = truth;
    cand.sensor_gains[k] = 0.0;
    let d = discrepancy(&obs, &cand).unwrap().value;
    let expected = signal(k) / (rows.len() * CHANNELS) as f64;
    assert!(expected > 0.0);
    assert!((d - expected).abs() < 1e-15, "{d} vs {expected}");
}

#[test]
fn discrepancy_ignores_trace_order() {
    let truth = SimParams::ideal().with_failure(FailureInjection::new(FailureCase::JointFail, 20, 0.5, 0));
    let obs: Vec<Observation> = (0..4)
        .map(|k| observe(&Controller::random(Topology::layered(3), 1.0, k), &truth, k as usize, 90))
        .collect();
    let cand = SimParams {
        motor_gain_left: 0.9,
        ..SimParams::ideal()
    };
    let a = discrepancy(&obs, &cand).unwrap().value;
    let mut rev = obs.clone();
    rev.reverse();
    rev.swap(0, 2);
    assert_eq!(discrepancy(&rev, &cand).unwrap().value, a);
    assert!(a > 0.0);
}

#[test]
fn mismatched_lengths_compare_common_prefix() {
    let c = Controller::random(Topology::layered(2), 1.0, 2);
    let long = observe(&c, &SimParams::ideal(), 0, 100);
    let short = observe(&c, &SimParams::ideal(), 0, 60);
    assert_eq!(trace_distance(&long.trace.rows, &short.trace.rows), 0.0);
    assert!(matches!(discrepancy(&[], &SimParams::ideal()), Err(EstimationError::NoTraces)));
}

#[test]
fn zero_controller_trace_is_constant() {
    let c = Controller::zeros(Topology::layered(4), 1.0);
    let o = observe(&c, &SimParams::ideal(), 1, 50);
    let first = o.trace.rows[0];
    for r in &o.trace.rows {
        assert_eq!((r.x, r.y, r.heading, r.s), (first.x, first.y, first.heading, first.s));
    }
}

#[test]
fn failed_sensor_reads_zero_after_onset() {
    let c = Controller::random(Topology::layered(4), 1.0, 8);
    let truth = SimParams::ideal().with_failure(FailureInjection::new(FailureCase::SensorFail, 30, 0.5, 4));
    let o = observe(&c, &truth, 2, 100);
    assert!(o.trace.rows[30..].iter().all(|r| r.s[4] == 0.0));
}

#[test]
fn prior_decodes_to_itself() {
    let prior = SimParams {
        motor_gain_left: 0.7,
        ..SimParams::ideal()
    };
    let space = ParamSpace {
        prior,
        case: None,
        gain_span: 0.2,
        n_hidden: 4,
        max_onset: 100,
    };
    assert_eq!(space.decode(&space.encode_prior()), prior);
    let clamped = ParamSpace {
        case: Some(FailureCase::NothingFail),
        ..space
    };
    assert_eq!(clamped.decode(&vec![0.0; clamped.gene_count()]), prior);
}

#[test]
fn ideal_traces_recover_ideal_params() {
    let c = Controller::random(Topology::layered(4), 1.0, 3);
    let obs = vec![observe(&c, &SimParams::ideal(), 0, 80)];
    let r = estimation_phase(&obs, &small_evo(1), &EstimationConfig::default(), &SimParams::ideal(), None).unwrap();
    assert_eq!(r.discrepancy, 0.0);
    for w in r.log.generations.windows(2) {
        assert!(w[1].best >= w[0].best);
    }
}

#[test]
fn diagnosis_ranks_all_cases_once() {
    let c = Controller::random(Topology::layered(4), 1.0, 4);
    let obs = vec![observe(&c, &SimParams::ideal(), 0, 80), observe(&c, &SimParams::ideal(), 2, 80)];
    let evo = EvoConfig {
        pop_size: 8,
        generations: 4,
        ..small_evo(2)
    };
    let d = diagnose(&obs, &evo, &EstimationConfig::default(), &SimParams::ideal()).unwrap();
    assert_eq!(d.len(), 9);
    let mut cases: Vec<FailureCase> = d.iter().map(|x| x.case).collect();
    cases.sort();
    assert_eq!(cases, FailureCase::ALL.to_vec());
    assert_eq!(d[0].case, FailureCase::NothingFail);
    assert_eq!(d[0].discrepancy, 0.0);
    let again = diagnose(&obs, &evo, &EstimationConfig::default(), &SimParams::ideal()).unwrap();
    assert_eq!(d, again);
    let text = diagnosis_text(&d);
    assert!(text.lines().nth(1).unwrap().contains("NothingFail"));
    let mut buf = Vec::new();
    write_diagnosis_csv(&d, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("rank,case,discrepancy\n1,NothingFail,0\n"));
}

#[test]
fn right_wheel_damage_beats_left() {
    let c = Controller::random(Topology::layered(4), 1.0, 6);
    let truth = SimParams::ideal().with_failure(FailureInjection::new(FailureCase::RightWheelDamage, 40, 0.5, 0));
    let obs = vec![observe(&c, &truth, 0, 100), observe(&c, &truth, 1, 100)];
    let d = diagnose(&obs, &small_evo(3), &EstimationConfig::default(), &SimParams::ideal()).unwrap();
    let rank = |case| d.iter().position(|x| x.case == case).unwrap();
    assert!(rank(FailureCase::RightWheelDamage) < rank(FailureCase::LeftWheelDamage));
    assert_ne!(d[0].case, FailureCase::NothingFail);
}

fn task() -> RobotTask {
    let mut t = RobotTask::new(
        make_world(TerrainKind::Flat, 0, 0).unwrap(),
        RobotBody::default(),
        FitnessConfig {
            max_steps: 120,
            ..FitnessConfig::default()
        },
        ControllerConfig::default(),
    );
    t.starts = vec![0];
    t
}

#[test]
fn exploration_is_deterministic() {
    let evo = EvoConfig {
        pop_size: 8,
        generations: 3,
        ..EvoConfig::default()
    };
    let (a, _) = exploration_phase(&SimParams::ideal(), &evo, &task()).unwrap();
    let (b, _) = exploration_phase(&SimParams::ideal(), &evo, &task()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dead_left_motor_forces_steering_from_the_right() {
    let params = SimParams {
        motor_gain_left: 0.0,
        ..SimParams::ideal()
    };
    let evo = EvoConfig {
        pop_size: 12,
        generations: 8,
        ..EvoConfig::default()
    };
    let t = task();
    let (c, _) = exploration_phase(&params, &evo, &t).unwrap();
    let s = t.world.corner_start(0, &t.body);
    let o = run_reference(&c, &params, &t.world, &t.body, &s, &reference_settings(120, 0, StepConfig::default()), meta("c", &s));
    let headings: Vec<f64> = o.trace.rows.iter().map(|r| r.heading).collect();
    let turns = headings.windows(2).filter(|w| w[1] != w[0]).count();
    assert!(turns > 0);
    assert!(o.trace.rows.iter().any(|r| r.motor_r.abs() > 0.1));
}

#[test]
fn loop_improves_on_the_starting_guess() {
    let truth = SimParams {
        motor_gain_left: 0.85,
        sensor_gains: [1.1; SENSOR_COUNT],
        ..SimParams::ideal()
    };
    let explore = EvoConfig {
        pop_size: 8,
        generations: 3,
        ..EvoConfig::default()
    };
    let (reports, obs) =
        estimation_loop(&SimParams::ideal(), &truth, &task(), &explore, &small_evo(5), &EstimationConfig { reference_steps: 100, ..EstimationConfig::default() }, 2).unwrap();
    assert_eq!(obs.len(), 2);
    for r in &reports {
        assert!(r.after <= r.before);
    }
    assert!(reports[0].after < reports[0].before);
}
