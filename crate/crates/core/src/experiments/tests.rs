use super::*;
use crate::world::TerrainKind;

fn small_plan() -> ExperimentPlan {
    ExperimentPlan {
        environments: vec![
            EnvSpec { terrain: TerrainKind::Flat, obstacles: false },
            EnvSpec { terrain: TerrainKind::Bumpy, obstacles: true },
        ],
        trials_per_env: 6,
        obstacle_count: 3,
        fitness: FitnessConfig { max_steps: 60, ..FitnessConfig::default() },
        controller: ControllerConfig { hidden: 0, ..ControllerConfig::default() },
        ..ExperimentPlan::default()
    }
}

fn small_evo() -> EvoConfig {
    EvoConfig { pop_size: 6, generations: 3, seed: 11, ..EvoConfig::default() }
}

#[test]
fn matrix_has_six_cells() {
    let m = EnvSpec::matrix();
    assert_eq!(m.len(), 6);
    let names: Vec<String> = m.iter().map(|e| e.to_string()).collect();
    assert_eq!(names[0], "flat/no-obs");
    assert_eq!(names[5], "combined/obs");
}

#[test]
fn report_means_match_trial_rows() {
    let r = run_matrix(&small_plan(), &small_evo()).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.trials.len(), 12);
    for row in &r.rows {
        let trials: Vec<&TrialRow> = r.trials.iter().filter(|t| t.env == row.env).collect();
        assert_eq!(trials.len(), 6);
        let m = trials.iter().map(|t| t.fitness).sum::<f64>() / 6.0;
        assert!((m - row.mean_fitness).abs() < 1e-12);
        let rl = trials.iter().map(|t| t.r_l).sum::<f64>() / 6.0;
        assert!((rl - row.mean_r_l).abs() < 1e-12);
        assert!(row.max_fitness >= row.mean_fitness);
    }
    for (_, curve) in &r.curves {
        assert_eq!(curve.len(), 4);
    }
}

#[test]
fn identical_environments_give_identical_rows() {
    let env = EnvSpec { terrain: TerrainKind::Flat, obstacles: true };
    let plan = ExperimentPlan { environments: vec![env, env], ..small_plan() };
    let r = run_matrix(&plan, &small_evo()).unwrap();
    let mut buf = Vec::new();
    write_table(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], lines[2]);
    assert_eq!(r.trials[..6], r.trials[6..]);
}

#[test]
fn export_is_bit_stable() {
    let plan = small_plan();
    let a = run_matrix(&plan, &small_evo()).unwrap();
    let b = run_matrix(&plan, &EvoConfig { workers: 4, ..small_evo() }).unwrap();
    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    let fa = export(&a, da.path(), true).unwrap();
    let fb = export(&b, db.path(), true).unwrap();
    assert_eq!(fa.len(), 5);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
    let table = std::fs::read_to_string(da.path().join("table.csv")).unwrap();
    assert!(table.starts_with("env,best_evolved,mean_fitness"));
    assert_eq!(table.lines().count(), 3);
    let curves = std::fs::read_to_string(da.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "generation,flat/no-obs,bumpy/obs");
}

#[test]
fn failure_distribution_covers_every_case() {
    let plan = small_plan();
    let env = plan.environments[0];
    let d = run_failure_distribution(&plan, &small_evo(), &env, 8).unwrap();
    assert_eq!(d.rows.len(), 9);
    assert_eq!(d.baseline.trials, 8);
    for r in &d.rows {
        assert_eq!(r.trials, 8);
        assert!(r.failures <= 8);
    }
    let nothing = d.rows.iter().find(|r| r.case == FailureCase::NothingFail).unwrap();
    assert_eq!(nothing.failures, d.baseline.failures);
    let mut buf = Vec::new();
    write_failures(Some(&d), &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
}

#[test]
fn bad_plans_are_rejected() {
    let e = ExperimentPlan { environments: vec![], ..small_plan() };
    assert!(matches!(run_matrix(&e, &small_evo()), Err(ExperimentError::Plan(_))));
    let e = ExperimentPlan { trials_per_env: 0, ..small_plan() };
    assert!(e.validate().is_err());
    let env = small_plan().environments[0];
    assert!(run_failure_distribution(&small_plan(), &small_evo(), &env, 0).is_err());
}
