use std::path::Path;
use std::process::{Command, Output};

use evobot_core::config::Config;
use evobot_core::genotype::{self, KHEPERA_GENOTYPE};

fn evobot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evobot")).args(args).output().expect("binary runs")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("machine-readable error line")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn parse_reports_counts_for_the_khepera_genotype() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.txt");
    std::fs::write(&file, format!("# the example body\n{KHEPERA_GENOTYPE}\n")).unwrap();
    let o = evobot(&["parse", p(&file)]);
    assert_eq!(o.status.code(), Some(0));
    let bp = genotype::parse(KHEPERA_GENOTYPE).unwrap();
    let expected = format!(
        "line 2: ok parts={} joints={} neurons={} connections={}",
        bp.parts.len(),
        bp.joints.len(),
        bp.neurons.len(),
        bp.connections.len()
    );
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), expected);
}

#[test]
fn parse_errors_give_one_based_columns() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.txt");
    std::fs::write(&file, "X\nX)\n").unwrap();
    let o = evobot(&["parse", p(&file)]);
    assert_eq!(o.status.code(), Some(2));
    let out = String::from_utf8_lossy(&o.stdout);
    let err = genotype::parse("X)").unwrap_err();
    assert!(out.contains(&format!("line 2: error col {}", err.position() + 1)), "{out}");
    assert_eq!(stderr_json(&o)["error"], "config");
}

#[test]
fn tiny_population_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = evobot(&["evolve", "--pop-size", "1", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["code"], 2);
    assert!(e["message"].as_str().unwrap().contains("pop_size"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(evobot(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(evobot(&["evolve", "--pop-size", "many"]).status.code(), Some(1));
    assert_eq!(stderr_json(&evobot(&["diagnose"]))["error"], "usage");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[evolution]\npopulation = 5\n").unwrap();
    let o = evobot(&["evolve", "-c", p(&cfg), "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_config_reingests_identically() {
    let dir = tempfile::tempdir().unwrap();
    let o = evobot(&["evolve", "--seed", "9", "--pop-size", "7", "--dump-config"]);
    assert_eq!(o.status.code(), Some(0));
    let dumped = String::from_utf8(o.stdout).unwrap();
    let cfg = Config::from_toml(&dumped).unwrap();
    assert_eq!(cfg.evolution.pop_size, 7);
    assert_eq!(cfg.evolution.seed, 9);
    let file = dir.path().join("c.toml");
    std::fs::write(&file, &dumped).unwrap();
    let again = evobot(&["evolve", "-c", p(&file), "--dump-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), dumped);
}

#[test]
fn seeded_evolve_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = evobot(&["evolve", "--seed", "4", "--pop-size", "8", "--generations", "5", "--workers", workers, "-o", p(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out.join("run.csv")).unwrap(), std::fs::read(out.join("best_controller.toml")).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
    let echoed = Config::load(&dir.path().join("a").join("config.toml")).unwrap();
    assert_eq!(echoed.evolution.seed, 4);
}

#[test]
fn simulate_then_diagnose_finds_the_injected_case() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = evobot(&["evolve", "--seed", "2", "--pop-size", "10", "--generations", "8", "-o", p(&d.join("evo"))]);
    assert_eq!(o.status.code(), Some(0));
    let ctrl = d.join("evo").join("best_controller.toml");
    let o = evobot(&[
        "simulate", "--seed", "2", "--controller", p(&ctrl), "--failure", "RightWheelDamage", "--full-length", "-o",
        p(&d.join("sim")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let result: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(result["fitness"].as_f64().unwrap() >= 0.0);
    let trace = d.join("sim").join("trajectory.csv");
    let o = evobot(&[
        "diagnose", "--seed", "2", "--pop-size", "8", "--generations", "5", "--controller", p(&ctrl), p(&trace), "-o",
        p(&d.join("diag")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("diag").join("diagnosis.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,RightWheelDamage,"), "{csv}");
}

#[test]
fn simulate_rejects_unknown_failure_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = evobot(&["simulate", "--failure", "Gremlins", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn default_experiment_writes_the_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = evobot(&["experiment", "--plot-data", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["table.csv", "curves.csv", "failures.csv", "curves_long.csv", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    let failures = std::fs::read_to_string(dir.path().join("failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 11);
}

#[test]
fn coevolution_and_ecology_modes_run() {
    let dir = tempfile::tempdir().unwrap();
    let co = dir.path().join("co");
    let o = evobot(&["evolve", "--mode", "coevolution", "--pop-size", "6", "--generations", "3", "-o", p(&co)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(co.join("run_layouts.csv").exists());
    let eco = dir.path().join("eco");
    let o = evobot(&["evolve", "--mode", "ecology", "--generations", "3", "-o", p(&eco)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(eco.join("lifespans.csv").exists());
}
