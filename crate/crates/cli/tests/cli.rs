use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const UNIT: &str = r#"
seed = 11
m = 2

[problem]
x0 = [0.0]
t = 1.0

[problem.drift]
kind = "affine"
a = [[-1.0]]
c = [0.0]

[payoff]
kind = "linear"
u = [1.0]
"#;

fn mlmc(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("experiment.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_mlmc"))
        .args(args)
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("MLMC_WORKERS")
        .output()
        .unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

#[test]
fn constants_for_unit_problem() {
    let dir = TempDir::new().unwrap();
    let out = mlmc(dir.path(), &["constants"], UNIT);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = json(dir.path(), "constants.json");
    assert!((c["K_1m"].as_f64().unwrap() - 5.274).abs() < 1e-3);
    assert!((c["C_9"].as_f64().unwrap() - 2.0301).abs() < 1e-4);
    let manifest = json(dir.path(), "manifest.json");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn large_eps_gives_single_level() {
    let dir = TempDir::new().unwrap();
    let out = mlmc(dir.path(), &["optimize"], &format!("{UNIT}\n[target]\neps = 100.0\n"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan = json(dir.path(), "plan.json");
    assert_eq!(plan["optimal"]["L_eps"], 0);
    assert_eq!(plan["optimal"]["N_l"].as_array().unwrap().len(), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let config = format!("{UNIT}\n[target]\neps = 0.1\n\n[validate.strong]\nn = [4, 8]\npaths = 2000\n");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        for args in [&["estimate"][..], &["validate", "strong"][..]] {
            let out = mlmc(dir.path(), args, &config);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let read = |n: &str| fs::read(dir.path().join("out").join(n)).unwrap();
        outputs.push((read("estimate.json"), read("validate_strong.json")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn worker_count_does_not_change_results() {
    let config = format!("{UNIT}\n[target]\neps = 0.1\n");
    let mut estimates = Vec::new();
    for w in ["1", "3"] {
        let dir = TempDir::new().unwrap();
        let out = mlmc(dir.path(), &["estimate", "--workers", w], &config);
        assert!(out.status.success());
        estimates.push(fs::read(dir.path().join("out/estimate.json")).unwrap());
        assert_eq!(json(dir.path(), "manifest.json")["workers"].as_u64().unwrap().to_string(), w);
    }
    assert_eq!(estimates[0], estimates[1]);
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = mlmc(dir.path(), &["constants"], &UNIT.replace("seed = 11", ""));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn validate_without_section_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = mlmc(dir.path(), &["validate", "mgf-u"], UNIT);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn understated_constant_is_reported_as_violation() {
    let config = r#"
seed = 3
m = 2

[problem]
x0 = [1.0]
t = 1.0

[problem.drift]
kind = "linear_decay"
k = 4.0

[problem.constants]
lip_grad = 1e-3

[payoff]
kind = "linear"
u = [1.0]

[validate.strong]
n = [4, 8]
paths = 2000
"#;
    let dir = TempDir::new().unwrap();
    let out = mlmc(dir.path(), &["validate", "strong"], config);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strong_error_terminal"));
    let csv = fs::read_to_string(dir.path().join("out/validate_strong_0_strong_error_terminal.csv")).unwrap();
    assert!(csv.starts_with("grid_value,empirical,std_error,bound,verdict"));
    assert!(csv.contains("violated_beyond3se"));
}
