use proptest::prelude::*;

use super::*;
use crate::genotype::{parse, KHEPERA_GENOTYPE};
use crate::world::{make_world, RobotBody, RobotState, StepConfig, TerrainKind};

fn reading(prox: [f64; SENSOR_COUNT]) -> SensorReading {
    SensorReading {
        proximity: prox,
        touch: false,
        rotation_rate_left: 0.0,
        rotation_rate_right: 0.0,
    }
}

fn random_reading(seed: u64) -> SensorReading {
    let mut rng = crate::rng::seeded(seed);
    reading(std::array::from_fn(|_| rng.random_range(0.0..1.0)))
}

#[test]
fn zero_weights_give_zero_output() {
    for h in [0, 3] {
        let mut c = Controller::zeros(Topology::layered(h), 1.0);
        assert_eq!(c.activate(&random_reading(1)), (0.0, 0.0));
    }
}

#[test]
fn topology_sizes() {
    assert_eq!(Topology::layered(0).edge_count(), INPUT_COUNT * 2);
    assert_eq!(Topology::layered(4).edge_count(), INPUT_COUNT * 4 + 2 * 5);
    let t = Topology::layered(2);
    assert!(t.edges().iter().all(|e| e.from < e.to));
}

#[test]
fn single_edge_matches_scalar_oracle() {
    let t = Topology::layered(0);
    let e = t.edge_index(0, t.output_node(0)).unwrap();
    let mut rng = crate::rng::seeded(4);
    for _ in 0..100 {
        let w: f64 = rng.random_range(-5.0..5.0);
        let mut weights = vec![0.0; t.edge_count()];
        weights[e] = w;
        let mut c = Controller::new(t.clone(), weights, 1.0).unwrap();
        let mut prox = [0.0; SENSOR_COUNT];
        prox[0] = 0.5;
        let (l, r) = c.activate(&reading(prox));
        assert!((l - (0.5 * w).tanh()).abs() < 1e-15);
        assert_eq!(r, 0.0);
    }
}

#[test]
fn alert_fires_at_threshold() {
    let t = Topology::layered(0);
    let mut c = Controller::zeros(t, 1.0);
    let mut prox = [0.0; SENSOR_COUNT];
    prox[0] = 0.6;
    prox[1] = 0.39;
    c.activate(&reading(prox));
    assert_eq!(c.activations()[ALERT_INPUT], 0.0);
    prox[1] = 0.4;
    c.activate(&reading(prox));
    assert_eq!(c.activations()[ALERT_INPUT], 1.0);
}

#[test]
fn nothing_fail_is_identity() {
    for seed in 0..20 {
        let mut a = Controller::random(Topology::layered(3), 1.0, seed);
        let mut b = a.clone().with_failure(FailureInjection::nothing());
        for k in 0..30 {
            let r = random_reading(seed * 100 + k);
            assert_eq!(a.activate(&r), b.activate(&r));
        }
    }
}

#[test]
fn sensor_fail_silences_one_input() {
    let f = FailureInjection::new(FailureCase::SensorFail, 0, 0.5, 3);
    let mut c = Controller::random(Topology::layered(2), 1.0, 9).with_failure(f);
    for k in 0..50 {
        c.activate(&reading([0.7; SENSOR_COUNT]));
        assert_eq!(c.last_inputs()[3], 0.0, "step {k}");
        assert_eq!(c.last_inputs()[4], 0.7);
    }
}

#[test]
fn failure_waits_for_onset() {
    let f = FailureInjection::new(FailureCase::LeftWheelDamage, 5, 0.5, 0);
    let mut c = Controller::random(Topology::layered(0), 1.0, 2).with_failure(f);
    let r = reading([0.3; SENSOR_COUNT]);
    for step in 0..10 {
        let (l, _) = c.activate(&r);
        assert_eq!(l == 0.0, step >= 5);
    }
}

#[test]
fn full_weakness_equals_wheel_damage() {
    for seed in 0..10 {
        let base = Controller::random(Topology::layered(2), 1.0, seed);
        let mut weak_l = base.clone().with_failure(FailureInjection::new(FailureCase::MotorWeak, 0, 1.0, 0));
        let mut dmg_l = base.clone().with_failure(FailureInjection::new(FailureCase::LeftWheelDamage, 0, 1.0, 0));
        let mut weak_r = base.clone().with_failure(FailureInjection::new(FailureCase::MotorWeak, 0, 1.0, 1));
        let mut dmg_r = base.clone().with_failure(FailureInjection::new(FailureCase::RightWheelDamage, 0, 1.0, 0));
        let r = random_reading(seed);
        assert_eq!(weak_l.activate(&r), dmg_l.activate(&r));
        assert_eq!(weak_r.activate(&r), dmg_r.activate(&r));
    }
}

#[test]
fn neuron_failures_zero_their_unit() {
    let base = Controller::random(Topology::layered(3), 1.0, 5);
    let r = random_reading(8);
    let mut wheel = base.clone().with_failure(FailureInjection::new(FailureCase::WheelNeuronFail, 0, 0.5, 1));
    let out = wheel.activate(&r);
    assert_eq!(out.1, 0.0);
    assert_eq!(wheel.last_outputs().1, 0.0);
    let mut hidden = base.clone().with_failure(FailureInjection::new(FailureCase::HiddenNeuronFail, 0, 0.5, 2));
    hidden.activate(&r);
    assert_eq!(hidden.activations()[INPUT_COUNT + 2], 0.0);
    let mut clean = base.clone();
    assert_ne!(clean.activate(&r), hidden.activate(&r));
}

#[test]
fn body_failures_leave_commands_alone() {
    let base = Controller::random(Topology::layered(2), 1.0, 6);
    let r = random_reading(2);
    for case in [FailureCase::BodyDamage, FailureCase::JointFail] {
        let mut a = base.clone();
        let mut b = base.clone().with_failure(FailureInjection::new(case, 0, 0.8, 0));
        assert_eq!(a.activate(&r), b.activate(&r));
    }
    let body = RobotBody::default();
    let dmg = FailureInjection::new(FailureCase::BodyDamage, 3, 0.5, 0);
    assert_eq!(dmg.body_at(&body, 2), body);
    assert_eq!(dmg.body_at(&body, 3).nominal_clearance, 0.5);
    assert_eq!(dmg.body_at(&body, 3).max_wheel_speed, body.max_wheel_speed * 0.75);
    let joint = FailureInjection::new(FailureCase::JointFail, 0, 0.5, 0);
    assert_eq!(joint.body_at(&body, 0).turn_gain, 0.5 * body.turn_gain);
}

#[test]
fn zero_eta_keeps_weights_bit_identical() {
    let mut c = Controller::random(Topology::layered(3), 1.0, 1);
    c.plasticity = PlasticityConfig::hebbian(0.0, 0.5);
    let before = c.weights().to_vec();
    for k in 0..500 {
        c.activate(&random_reading(k));
    }
    assert_eq!(c.weights(), &before[..]);
}

#[test]
fn one_hebbian_step() {
    let edges = [Edge { from: 0, to: 1 }];
    let mut w = [0.0];
    plasticity_step(&mut w, &edges, &[1.0, 1.0], &PlasticityConfig::hebbian(0.1, 1.0));
    assert_eq!(w[0], 0.1);
}

#[test]
fn hebbian_respects_clip() {
    let mut c = Controller::random(Topology::layered(3), 0.5, 3);
    c.plasticity = PlasticityConfig::hebbian(0.3, 1.5);
    for k in 0..1000 {
        c.activate(&random_reading(k));
        assert!(c.weights().iter().all(|w| w.abs() <= 1.5));
    }
}

#[test]
fn mirrored_inputs_swap_outputs() {
    let t = Topology::layered(0);
    let mirror = |i: usize| if i < SENSOR_COUNT { i ^ 1 } else { i };
    for seed in 0..20 {
        let c = Controller::random(t.clone(), 1.0, seed);
        let mut w2 = vec![0.0; t.edge_count()];
        for (o, other) in [(0, 1), (1, 0)] {
            for i in 0..INPUT_COUNT {
                let src = t.edge_index(mirror(i), t.output_node(other)).unwrap();
                w2[t.edge_index(i, t.output_node(o)).unwrap()] = c.weights()[src];
            }
        }
        let mut a = c.clone();
        let mut b = Controller::new(t.clone(), w2, 1.0).unwrap();
        let r = random_reading(seed + 50);
        let m = reading(std::array::from_fn(|k| r.proximity[mirror(k)]));
        let (l, rr) = a.activate(&r);
        let (ml, mr) = b.activate(&m);
        assert!((l - mr).abs() < 1e-12 && (rr - ml).abs() < 1e-12);
    }
}

#[test]
fn bodyplan_controller() {
    let bp = parse(KHEPERA_GENOTYPE).unwrap();
    let hidden = bp.neurons.iter().filter(|n| n.kind == NeuronKind::Hidden).count();
    assert_eq!(hidden, 0);
    let c = controller_from_bodyplan(&bp, 1.0, 7);
    assert_eq!(c.topology().n_hidden(), 0);
    assert_eq!(c.topology().edge_count(), INPUT_COUNT * 2);
    let t = c.topology();
    // sensor neurons n0, n2 are inputs 0, 1; motor n1 is the left output
    assert_eq!(c.weights()[t.edge_index(0, t.output_node(0)).unwrap()], -3.0);
    assert_eq!(c.weights()[t.edge_index(1, t.output_node(0)).unwrap()], 2.0);
    assert_eq!(controller_from_bodyplan(&bp, 1.0, 7), c);
    assert_ne!(controller_from_bodyplan(&bp, 1.0, 8), c);

    let bp = parse("X[:1][-1:2]").unwrap();
    let c = controller_from_bodyplan(&bp, 1.0, 0);
    assert_eq!(c.topology().n_hidden(), 2);
}

#[test]
fn text_round_trip() {
    let mut c = Controller::random(Topology::layered(2), 0.8, 11);
    c.plasticity = PlasticityConfig::hebbian(0.01, 3.0);
    c.failure = Some(FailureInjection::new(FailureCase::SensorFail, 12, 0.5, 4));
    let text = c.to_text();
    let back = Controller::from_text(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_text(), text);
    assert!(text.starts_with("format_version = 1"));
    let bad = text.replace("format_version = 1", "format_version = 9");
    assert!(Controller::from_text(&bad).is_err());
}

#[test]
fn forward_primitive_runs_straight() {
    let w = make_world(TerrainKind::Flat, 0, 0).unwrap();
    let body = RobotBody::default();
    let cfg = StepConfig::default();
    let s0 = RobotState::at(3.0, 10.0, 0.0, &body);
    let traj = run_primitive_sequence(&[(Primitive::Forward, 20)], &w, &body, &s0, &cfg);
    let end = traj.last().unwrap();
    let expected = 20.0 * body.top_speed() * cfg.dt();
    assert!((end.x - s0.x - expected).abs() < 1e-9);
    assert!((end.y - s0.y).abs() < 1e-12);
}

#[test]
fn turn_left_turns_in_place() {
    let w = make_world(TerrainKind::Flat, 0, 0).unwrap();
    let body = RobotBody::default();
    let s0 = RobotState::at(10.0, 3.0, 0.2, &body);
    let traj = run_primitive_sequence(&[(Primitive::TurnLeft, 15)], &w, &body, &s0, &StepConfig::default());
    let end = traj.last().unwrap();
    assert!(end.heading > s0.heading);
    assert!((end.x - s0.x).hypot(end.y - s0.y) < 1e-9);
}

#[test]
fn seek_approaches_target() {
    let w = make_world(TerrainKind::Flat, 0, 0).unwrap();
    let body = RobotBody::default();
    let s0 = RobotState::at(2.0, 2.0, 2.5, &body);
    let traj = run_primitive_sequence(&[(Primitive::Seek, 60)], &w, &body, &s0, &StepConfig::default());
    let end = traj.last().unwrap();
    assert!(w.distance_to_goal(&body, end.x, end.y) < w.distance_to_goal(&body, s0.x, s0.y));
}

proptest! {
    #[test]
    fn outputs_stay_bounded(seed in any::<u64>(), scale in 0.0f64..50.0) {
        let mut c = Controller::random(Topology::layered(3), 1.0, seed);
        c.weights_mut().iter_mut().for_each(|w| *w *= scale);
        let (l, r) = c.activate(&random_reading(seed));
        prop_assert!((-1.0..=1.0).contains(&l) && (-1.0..=1.0).contains(&r));
    }

    #[test]
    fn weakness_is_monotone(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0, side in 0u64..2) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let base = Controller::random(Topology::layered(2), 1.0, seed);
        let r = random_reading(seed);
        let mut weak = base.clone().with_failure(FailureInjection::new(FailureCase::MotorWeak, 0, lo, side));
        let mut weaker = base.clone().with_failure(FailureInjection::new(FailureCase::MotorWeak, 0, hi, side));
        let x = weak.activate(&r);
        let y = weaker.activate(&r);
        let pick = |p: (f64, f64)| if side == 0 { p.0 } else { p.1 };
        prop_assert!(pick(y).abs() <= pick(x).abs());
    }
}
