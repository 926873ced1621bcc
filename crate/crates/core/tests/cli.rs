use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regret_core::report::{Cell, Report};

fn regret(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_regret"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

const GAME: &str = r#"{"game": {"n": 2, "p": 0.5, "u_high": 2.5, "kappa": 1.0, "q": {"form": "linear"}}}"#;

#[test]
fn classify_prints_regime_and_writes_equilibria() {
    let dir = tempfile::tempdir().unwrap();
    let out = regret(dir.path(), GAME, &["game", "classify"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Coordination"));
    let csv = fs::read_to_string(dir.path().join("out/equilibria.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "profile,risky_count,welfare");
    assert_eq!(&lines[1..], ["SS,0,2.0", "RR,2,1.5"]);
}

#[test]
fn missing_seed_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"game": {"n": 3, "p": 0.5, "u_high": 2.5, "kappa": 1.0, "q": {"form": "linear"}},
                     "dynamics": {"rule": "best_response", "inertia": 0.0, "steps": 10}}"#;
    let out = regret(dir.path(), config, &["dynamics", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let out = regret(dir.path(), config, &["dynamics", "run", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_q_function_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"game": {"n": 3, "p": 0.5, "u_high": 2.5, "kappa": 1.0, "q": {"form": "table", "values": [0.0, 0.5, 0.8]}}}"#;
    let out = regret(dir.path(), config, &["game", "solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("game.q"));
}

#[test]
fn runtime_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // three players have no two-player mixed equilibrium
    let config = r#"{"game": {"n": 3, "p": 0.5, "u_high": 2.5, "kappa": 1.0, "q": {"form": "linear"}}}"#;
    let out = regret(dir.path(), config, &["game", "mixed"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn threshold_sweep_has_eleven_monotone_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = regret(dir.path(), r#"{"preferences": {"kappa1": 1.0}}"#, &["decide", "threshold"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/threshold.csv")).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 11);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn json_reports_reload_equal() {
    let dir = tempfile::tempdir().unwrap();
    let out = regret(dir.path(), GAME, &["game", "mixed", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/game_mixed.json")).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.to_json(), text);
    assert_eq!(report.metadata.seed, None);
    assert_eq!(report.table("mixed").unwrap().rows[0][0], Cell::Float(0.333333333));
}

#[test]
fn xp_summary_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"experiment": {"population": {"agents": [
        {"pref": {"kappa1": 1.0}}, {"pref": {"kappa1": 0.0}}, {"pref": {"kappa1": 1.0}}, {"pref": {"kappa1": 0.0}}]},
        "rounds_d6": 3}, "seed": 5}"#;
    let out = regret(dir.path(), config, &["xp", "summarize"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for table in ["type_shares", "d4_d5_rates", "thresholds", "exp2_choices_beliefs", "d6_agreement"] {
        assert!(dir.path().join(format!("out/{table}.csv")).exists(), "{table}");
    }
    let d45 = fs::read_to_string(dir.path().join("out/d4_d5_rates.csv")).unwrap();
    assert!(d45.lines().any(|l| l == "regret_averse,2,0.0,2,1.0"), "{d45}");
}
