use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use freqplan::domain::Scenario;
use freqplan::experiment::{ExperimentConfig, PipelineParams, Workbench};
use freqplan::scenario::{ScenarioSpec, UncertaintyLevel, UserCounts};
use freqplan::solver::solve_exact;

fn freqplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqplan"))
        .args(args)
        .env("FREQPLAN_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = freqplan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn generate(dir: &Path, preset: &str, seed: &str, uncertainty: &str) {
    ok(&["generate", "--preset", preset, "--seed", seed, "--uncertainty", uncertainty, "--out-dir", &p(dir, "")]);
}

fn plan_and_simulate(dir: &Path, config: &str, seed: &str) {
    let sc = p(dir, "scenario.json");
    ok(&["plan", "--scenario", &sc, "--config", config, "--seed", seed, "--out-dir", &p(dir, config)]);
    let plan = p(dir, &format!("{config}/plan.json"));
    ok(&["simulate", "--scenario", &sc, "--plan", &plan, "--config", config, "--out-dir", &p(dir, config)]);
}

#[test]
fn same_seed_same_scenario_file() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    generate(&a, "paper-245", "7", "high");
    generate(&b, "paper-245", "7", "high");
    let fa = std::fs::read(a.join("scenario.json")).unwrap();
    assert_eq!(fa, std::fs::read(b.join("scenario.json")).unwrap());
    generate(&b, "paper-245", "8", "high");
    assert_ne!(fa, std::fs::read(b.join("scenario.json")).unwrap());
}

#[test]
fn presets_set_population() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "paper-330", "0", "none");
    assert_eq!(json(d.path(), "scenario.json")["users"].as_array().unwrap().len(), 330);
    generate(d.path(), "empty", "0", "none");
    assert!(json(d.path(), "scenario.json")["users"].as_array().unwrap().is_empty());
}

#[test]
fn empty_scenario_gives_zero_metrics() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "empty", "0", "high");
    plan_and_simulate(d.path(), "D2", "0");
    let m = json(d.path(), "D2/metrics.json");
    assert_eq!(m["power_w"], 0.0);
    assert_eq!(m["n_realloc"], 0);
    assert_eq!(m["served_fraction"], 0.0);
    assert_eq!(std::fs::read_to_string(d.path().join("D2/ops_log.ndjson")).unwrap(), "");
}

#[test]
fn unknown_config_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "empty", "0", "none");
    let out = freqplan(&["plan", "--scenario", &p(d.path(), "scenario.json"), "--config", "Z9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Z9"));
    let out = freqplan(&["experiment", "--config", "A,D5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_scenario_fails_with_message() {
    let out = freqplan(&["plan", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/scenario.json"));
}

#[test]
fn simulate_refuses_a_plan_for_another_scenario() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    generate(&a, "paper-245", "1", "low");
    generate(&b, "paper-245", "2", "low");
    ok(&["plan", "--scenario", &p(&a, "scenario.json"), "--out-dir", &p(&a, "")]);
    let out = freqplan(&["simulate", "--scenario", &p(&b, "scenario.json"), "--plan", &p(&a, "plan.json"), "--out-dir", &p(&b, "")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan was made for scenario"));
    assert!(!b.join("metrics.json").exists());
    // a configuration other than the plan's is refused too
    let out = freqplan(&["simulate", "--scenario", &p(&a, "scenario.json"), "--plan", &p(&a, "plan.json"), "--config", "D1", "--out-dir", &p(&a, "")]);
    assert!(!out.status.success());
}

#[test]
fn certain_scenario_is_fully_served_without_reallocation() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "paper-245", "3", "none");
    plan_and_simulate(d.path(), "A", "3");
    assert_eq!(json(d.path(), "A/report.json")["served_fraction"], 1.0);
    let m = json(d.path(), "A/metrics.json");
    assert_eq!(m["n_realloc"], 0);
    assert_eq!(m["served_fraction"], 1.0);
    let occ = std::fs::read_to_string(d.path().join("A/occupancy.csv")).unwrap();
    assert!(occ.starts_with("t_s,g,p,beams,channels_in_use,channel_uses"));
    assert!(occ.lines().count() > 1);
    let v = freqplan(&["validate", "--scenario", &p(d.path(), "scenario.json"), "--plan", &p(d.path(), "A/final_plan.json"), "--out-dir", &p(d.path(), "")]);
    assert_eq!(v.status.code(), Some(0));
    assert!(json(d.path(), "validation.json")["violations"].as_array().unwrap().is_empty());
}

#[test]
fn validate_flags_a_broken_plan() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "paper-245", "5", "none");
    let sc = p(d.path(), "scenario.json");
    ok(&["plan", "--scenario", &sc, "--out-dir", &p(d.path(), "")]);
    let mut pf = json(d.path(), "plan.json");
    for pieces in pf["plan"]["assignments"].as_object_mut().unwrap().values_mut() {
        for piece in pieces.as_array_mut().unwrap() {
            if piece["state"] == "assigned" {
                piece["f"] = 1.into();
                piece["g"] = 1.into();
                piece["p"] = 1.into();
            }
        }
    }
    std::fs::write(d.path().join("broken.json"), serde_json::to_vec(&pf).unwrap()).unwrap();
    let v = freqplan(&["validate", "--scenario", &sc, "--plan", &p(d.path(), "broken.json"), "--out-dir", &p(d.path(), "")]);
    assert_eq!(v.status.code(), Some(2));
    assert!(!json(d.path(), "validation.json")["violations"].as_array().unwrap().is_empty());
}

#[test]
fn reserved_spectrum_serves_at_least_as_many_users() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--preset", "paper-245", "--seed", "6", "--uncertainty", "high", "--load-factor", "8", "--out-dir", &p(d.path(), "")]);
    plan_and_simulate(d.path(), "A", "6");
    plan_and_simulate(d.path(), "D4", "6");
    let a = json(d.path(), "A/metrics.json")["served_fraction"].as_f64().unwrap();
    let d4 = json(d.path(), "D4/metrics.json")["served_fraction"].as_f64().unwrap();
    assert!(d4 >= a, "D4 {d4} vs A {a}");
}

fn summary(dir: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rd = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    rd.deserialize().map(|r| r.unwrap()).collect()
}

#[test]
fn one_config_one_seed_gives_one_row() {
    let d = tempfile::tempdir().unwrap();
    ok(&["experiment", "--preset", "paper-245", "--config", "B", "--seeds", "1", "--uncertainty", "low", "--out-dir", &p(d.path(), "")]);
    let rows = summary(d.path());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["config"], "B");
    assert_eq!(rows[0]["runs"], "1");
    assert_eq!(rows[0]["served_sd"], "0.000000");
}

#[test]
fn summary_matches_hand_aggregation_of_runs() {
    let d = tempfile::tempdir().unwrap();
    ok(&["experiment", "--preset", "paper-245", "--config", "C,A", "--seed", "2", "--seeds", "3", "--out-dir", &p(d.path(), "")]);
    let runs = json(d.path(), "runs.json");
    let runs = runs.as_array().unwrap();
    assert_eq!(runs.len(), 6);
    let rows = summary(d.path());
    assert_eq!(rows.iter().map(|r| r["config"].as_str()).collect::<Vec<_>>(), ["A", "C"]);
    for row in &rows {
        let mine: Vec<&Value> = runs.iter().filter(|r| r["config"] == row["config"].as_str()).collect();
        assert_eq!(row["runs"], mine.len().to_string());
        for (field, col) in [
            ("served_fraction", "served"),
            ("power_ratio", "power_ratio"),
            ("realloc_per_beam", "realloc_per_beam"),
        ] {
            let xs: Vec<f64> = mine.iter().map(|r| r[field].as_f64().unwrap()).collect();
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
            let got_m: f64 = row[&format!("{col}_mean")].parse().unwrap();
            let got_sd: f64 = row[&format!("{col}_sd")].parse().unwrap();
            assert!((got_m - m).abs() < 1e-6, "{col} mean {got_m} vs {m}");
            assert!((got_sd - sd).abs() < 1e-6, "{col} sd {got_sd} vs {sd}");
        }
        for r in mine {
            let ratio = r["power_w"].as_f64().unwrap() / r["ideal_power_w"].as_f64().unwrap();
            assert!((r["power_ratio"].as_f64().unwrap() - ratio).abs() <= 1e-12 * ratio);
        }
    }
}

#[test]
fn small_plan_objective_matches_exhaustive_search() {
    let d = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec {
        counts: UserCounts {
            fixed: 4,
            aeronautical: 1,
            maritime: 0,
            land_mobile: 0,
        },
        uncertainty: UncertaintyLevel::None,
        seed: 21,
        ..ScenarioSpec::default()
    };
    std::fs::write(d.path().join("spec.json"), serde_json::to_vec(&spec).unwrap()).unwrap();
    ok(&["generate", "--spec", &p(d.path(), "spec.json"), "--out-dir", &p(d.path(), "")]);
    ok(&["plan", "--scenario", &p(d.path(), "scenario.json"), "--config", "A", "--out-dir", &p(d.path(), "")]);
    let report = json(d.path(), "report.json");

    let s: Scenario = serde_json::from_str(&std::fs::read_to_string(d.path().join("scenario.json")).unwrap()).unwrap();
    let mut wb = Workbench::new(&s, &PipelineParams::default()).unwrap();
    let known = wb.known_beams();
    assert!(!known.is_empty() && known.len() <= 8, "{} beams", known.len());
    assert_eq!(report["n_known_beams"], known.len());
    let cfg = ExperimentConfig::named("A").unwrap();
    let cc = wb.constraint_config(&cfg);
    let sc = cfg.solve_config(0, s.horizon_s, &wb.params);
    let sets = wb.restriction_sets(&cc).clone();
    let ex = solve_exact(&known, &sets, &s.grid, &sc).unwrap();
    assert!(ex.all_served(known.len()));
    let got = report["report"]["objective_watts"].as_f64().unwrap();
    assert!((got - ex.objective_watts).abs() <= 1e-9 * ex.objective_watts, "{got} vs {}", ex.objective_watts);
}
