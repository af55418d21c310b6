use std::path::Path;
use std::process::{Command, Output};

use factive::montecarlo::{simulate, Execution, SimulationSummary};
use factive::{EstimateReport, ScenarioConfig};

const SCENARIO: &str = r#"
[design]
n_eligible = 120
n_broader = 80
seed = 4

[model]
noise_sd = 1.0
[model.cell_means]
eligible_rct = { experimental = 1.0, control = 0.0 }
eligible_crw = { experimental = 0.8, control = 0.0 }
broader_rct = { experimental = 1.2, control = 0.0 }
broader_crw = { experimental = 0.5, control = 0.0 }

[simulation]
n_reps = 50
seed = 2
"#;

fn factive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factive")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_clean_scenario_prints_ok() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let o = factive(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ok\n");
}

#[test]
fn validation_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &SCENARIO.replace("seed = 4", "seed = 4\np_treatment = 1.0"));
    let o = factive(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("design.p_treatment"), "{}", stdout(&o));
    // the same scenario is refused by every other subcommand
    assert_eq!(factive(&["simulate", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn parse_errors_exit_with_1_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &SCENARIO.replace("noise_sd", "noise_s"));
    let o = factive(&["truth", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("noise_s"), "{err}");
}

#[test]
fn ablated_scenario_warns_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let ablated = SCENARIO.replace("n_broader = 80", "n_broader = 0\np_part_a = 1.0");
    let cfg = write(dir.path(), "s.toml", &ablated);
    let o = factive(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("warning:"), "{text}");
    assert!(text.contains("theta8"), "{text}");
}

#[test]
fn data_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "id,eligible,part,conditions,treatment,y,ice\n1,1,A,0,1,0.5,0\n");
    let o = factive(&["estimate", "--data", &data]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 1"));
    let missing = dir.path().join("absent.csv");
    assert_eq!(factive(&["estimate", "--data", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn generated_dataset_reingests_and_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let o = factive(&["generate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next().unwrap(), "id,eligible,part,conditions,treatment,y,ice");
    assert_eq!(csv.lines().count(), 201);
    let data = write(dir.path(), "d.csv", &csv);
    let o = factive(&["estimate", "--data", &data, "--weights", "sample-size", "--variance", "cell-wise"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: EstimateReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report.n, 200);
    assert!(report.estimates.iter().all(|r| r.is_estimable()));
    let text = factive(&["estimate", "--data", &data, "--format", "text"]);
    assert!(stdout(&text).contains("theta1_tilde"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let base = stdout(&factive(&["generate", "--config", &cfg]));
    let same = stdout(&factive(&["generate", "--config", &cfg, "--seed", "4"]));
    let other = stdout(&factive(&["generate", "--config", &cfg, "--seed", "5"]));
    assert_eq!(base, same);
    assert_ne!(base, other);
}

#[test]
fn simulate_json_matches_in_process_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let o = factive(&["simulate", "--config", &cfg, "--reps", "30", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0));
    let parsed: SimulationSummary = serde_json::from_str(&stdout(&o)).unwrap();
    let scenario = ScenarioConfig::from_toml_str(SCENARIO).unwrap().scenario();
    let direct = simulate(&scenario, 30, 11, Execution::Sequential).unwrap().summary;
    assert_eq!(parsed, direct);
    assert_eq!(parsed.n_reps, 30);
}

#[test]
fn simulate_writes_all_artifacts_to_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let out = dir.path().join("results");
    let o = factive(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    for f in ["summary.json", "summary.txt", "replicates.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "replicate,estimand,estimate,se,covered,rejected");
    assert_eq!(csv.lines().count(), 1 + 50 * 9);
    let stdout_csv = stdout(&factive(&["simulate", "--config", &cfg, "--format", "csv"]));
    assert_eq!(stdout_csv, csv);
}

#[test]
fn truth_text_lists_every_estimand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let text = stdout(&factive(&["truth", "--config", &cfg, "--format", "text"]));
    for name in factive::EstimandName::ALL {
        assert!(text.contains(name.as_str()), "{name}");
    }
    let json: serde_json::Value = serde_json::from_str(&stdout(&factive(&["truth", "--config", &cfg]))).unwrap();
    assert_eq!(json["theta1"], 1.0);
    assert!((json["theta4"].as_f64().unwrap() + 0.2).abs() < 1e-15);
}
