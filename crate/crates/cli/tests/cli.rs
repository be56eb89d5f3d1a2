use std::fs;
use std::path::{Path, PathBuf};

use evograph_cli::{cmd_run, cmd_scenario, cmd_validate, ConfigArgs, EXIT_CONFIG, EXIT_OK};
use tempfile::TempDir;

const SMALL: &str = r#"
[engine]
n = 4
T = 3
seed = 5

[estate]
preset = "minimal"
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn args(config: &Path) -> ConfigArgs {
    ConfigArgs { config: config.to_path_buf(), ..ConfigArgs::default() }
}

fn validate(a: &ConfigArgs) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cmd_validate(a, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn run(a: &ConfigArgs, out_dir: &Path) -> (i32, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cmd_run(a, Some(out_dir), None, &mut out, &mut err);
    (code, String::from_utf8(err).unwrap())
}

#[test]
fn validate_prints_effective_config() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "small.toml", SMALL);
    let (code, out, err) = validate(&args(&path));
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("T = 3"), "{out}");
    assert!(out.contains("preset = \"minimal\""), "{out}");
    // Defaults are filled in.
    assert!(out.contains("tau_test"), "{out}");
}

#[test]
fn overrides_and_seed_flag_apply() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "small.toml", SMALL);
    let a = ConfigArgs { seed: Some(77), overrides: vec!["engine.T=7".into()], ..args(&path) };
    let (code, out, _) = validate(&a);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("T = 7") && out.contains("seed = 77"), "{out}");

    let bad = ConfigArgs { overrides: vec!["engine.T".into()], ..args(&path) };
    assert_eq!(validate(&bad).0, EXIT_CONFIG);
}

#[test]
fn out_of_range_field_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "bad.toml", &SMALL.replace("seed = 5", "seed = 5\nmutation_rate = 1.5"));
    let (code, _, err) = validate(&args(&path));
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("mutation_rate"), "{err}");
    let (code, err) = run(&args(&path), dir.path());
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("mutation_rate"), "{err}");
}

#[test]
fn unknown_key_names_its_path() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "bad.toml", &SMALL.replace("seed = 5", "seed = 5\ngenerations_typo = 4"));
    let (code, _, err) = validate(&args(&path));
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("generations_typo"), "{err}");
}

#[test]
fn missing_estate_and_missing_file_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "noestate.toml", "[engine]\nT = 3\n");
    let (code, _, err) = validate(&args(&path));
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("estate"), "{err}");
    assert_eq!(validate(&args(&dir.path().join("absent.toml"))).0, EXIT_CONFIG);
}

#[test]
fn json_configs_are_accepted() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "small.json", r#"{"engine": {"n": 4, "T": 2}, "estate": {"preset": "minimal"}}"#);
    assert_eq!(validate(&args(&path)).0, EXIT_OK);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    assert_eq!(cmd_scenario("ablation-everything", None, &mut out, &mut err), EXIT_CONFIG);
    assert!(String::from_utf8(err).unwrap().contains("adaptation"));
}

#[test]
fn scenario_prints_a_verdict() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    assert_eq!(cmd_scenario("bandit-convergence", Some(vec![1, 2]), &mut out, &mut err), EXIT_OK);
    let out = String::from_utf8(out).unwrap();
    assert!(out.contains("bandit-convergence: ") && out.contains("seeds (need 2)"), "{out}");
}

#[test]
fn run_writes_outputs_deterministically() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "small.toml", SMALL);
    let names = ["metrics.csv", "events.jsonl", "archive.json", "effective-config.toml"];
    let mut seen: Vec<Vec<Vec<u8>>> = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("out{i}"));
        let (code, err) = run(&args(&path), &out);
        assert_eq!(code, EXIT_OK, "{err}");
        seen.push(names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect());
    }
    assert_eq!(seen[0], seen[1]);

    let csv = String::from_utf8(seen[0][0].clone()).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(csv.starts_with("gen,best_utility,"));
    let events = String::from_utf8(seen[0][1].clone()).unwrap();
    for line in events.lines() {
        check_event_line(line);
    }
    // The written config reloads to the same run.
    let again = dir.path().join("again");
    let reloaded = args(&dir.path().join("out0/effective-config.toml"));
    assert_eq!(run(&reloaded, &again).0, EXIT_OK);
    assert_eq!(fs::read(again.join("events.jsonl")).unwrap(), seen[0][1]);
}

fn check_event_line(line: &str) {
    assert!(line.starts_with('{') && line.ends_with('}'), "{line}");
    assert!(line.contains("\"generation\":"));
}
