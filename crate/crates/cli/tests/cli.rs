use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fraclab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .current_dir(dir)
        .env_remove("FRACLAB_CACHE_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_eigenvalues(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn sweep_example_runs_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraclab(
        dir.path(),
        &["sweep", "--bc", "dirichlet", "--s", "0.5", "--p", "2", "--cells", "256", "--weight", "sin:base=2,amp=1",
          "--eps", "1/4:1/16", "--k", "3", "--out", "sweep.csv"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("variant,s,p,k,eps,lambda_eps,lambda_limit,error\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["config"]["cells"], 256);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["versions"]["fraclab"].is_string());
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn neumann_below_trace_regime_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraclab(dir.path(), &["sweep", "--bc", "neumann", "--s", "0.3", "--p", "3", "--cells", "256", "--eps", "1/4:1/16"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("s > 1/p"));
}

#[test]
fn degenerate_weight_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraclab(dir.path(), &["spectrum", "--weight", "checker:lo=0,hi=1"]);
    assert_eq!(code(&out), 2);
    let out = fraclab(dir.path(), &["spectrum", "--weight", "wobble:1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_flag_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fraclab(dir.path(), &["spectrum", "--bogus"])), 2);
    assert_eq!(code(&fraclab(dir.path(), &["spectrum", "--bc", "robin"])), 2);
}

#[test]
fn spectrum_scales_with_constant_weight() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["spectrum", "--cells", "128", "--k", "6"];
    let one = fraclab(dir.path(), &[&base[..], &["--weight", "const:1", "--out", "one.csv"]].concat());
    let two = fraclab(dir.path(), &[&base[..], &["--weight", "const:2", "--out", "two.csv"]].concat());
    assert_eq!(code(&one), 0);
    assert_eq!(code(&two), 0);
    let a = read_eigenvalues(&dir.path().join("one.csv"));
    let b = read_eigenvalues(&dir.path().join("two.csv"));
    assert_eq!(a.len(), 6);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - 2.0 * y).abs() <= 1e-12 * x);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--cells", "64", "--p", "3", "--eps", "1/4", "--seed", "9"];
    assert_eq!(code(&fraclab(dir.path(), &[&args[..], &["--out", "a.csv"]].concat())), 0);
    assert_eq!(code(&fraclab(dir.path(), &[&args[..], &["--out", "b.csv"]].concat())), 0);
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), r#"{"cells": 64, "s": 0.3, "k": 2, "out": "cfg.csv"}"#).unwrap();
    let out = fraclab(dir.path(), &["spectrum", "--config", "run.json", "--k", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_eigenvalues(&dir.path().join("cfg.csv")).len(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cfg.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["s"], 0.3);
    fs::write(dir.path().join("bad.json"), r#"{"cels": 64}"#).unwrap();
    assert_eq!(code(&fraclab(dir.path(), &["spectrum", "--config", "bad.json"])), 2);
}

#[test]
fn cache_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .current_dir(dir.path())
        .env("FRACLAB_CACHE_DIR", &cache)
        .args(["spectrum", "--cells", "32", "--k", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
}

#[test]
fn inequality_commands_write_constant_reports() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 4] = [
        &["poincare", "--cells", "32", "--s", "0.4", "--eps", "1:1/16", "--out", "pc.csv"],
        &["oscillation", "--cells", "128", "--eps", "1/4:1/8", "--probes", "2", "--out", "osc.csv"],
        &["boundary-layer", "--cells", "128", "--s", "0.75", "--delta", "1/8:1/32", "--out", "bl.csv"],
        &["weyl", "--cells", "256", "--s", "0.5", "--krange", "5:20", "--out", "weyl.csv"],
    ];
    for args in runs {
        let out = fraclab(dir.path(), args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let pc = fs::read_to_string(dir.path().join("pc.csv")).unwrap();
    assert!(pc.starts_with("param,constant,normalized_constant\n"));
    assert_eq!(pc.lines().count(), 1 + 5);
    assert!(dir.path().join("osc.json").exists());
    assert_eq!(code(&fraclab(dir.path(), &["boundary-layer", "--s", "0.4"])), 2);
}

#[test]
fn verify_all_quick_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraclab(dir.path(), &["verify-all", "--quick", "--only", "1,5,8,10,11"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows = stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count();
    assert_eq!(rows, 5, "{stdout}");
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(dir.path().join("verify.manifest.json").exists());
}

#[test]
fn verify_all_quick_covers_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraclab(dir.path(), &["verify-all", "--quick"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows = stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count();
    assert!(rows >= 10, "{stdout}");
    // Exit 1 reports failed checks; anything else is a crash or a usage error.
    assert!(matches!(code(&out), 0 | 1), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + rows);
}
