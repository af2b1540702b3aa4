//! End-to-end checks of the command-line driver: pipeline runs, exit codes,
//! and byte-identical reruns.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_patternspectra")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn")
}

fn write_config(dir: &std::path::Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const LAMOM: &str = r#"
grid_n = 8
k = [[0.05, 0.01], [0.0, 0.04898979485566356]]

[model]
name = "lambda_omega"
m = 1.0
om = 0.06676325599919307
gam = 0.2
dl = -0.1
g = 1.0
h = 0.35
a = 0.0

[tolerances]
h = 0.002
"#;

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("patternspectra-cli-{name}"));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn profile_then_classify_pipeline() {
    let dir = tmp("pipeline");
    let cfg = write_config(&dir, LAMOM);
    let out_dir = dir.join("out");
    let cfg_s = cfg.to_str().unwrap();
    let out_s = out_dir.to_str().unwrap();

    let o = run(&["profile", "--config", cfg_s, "--out", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let arc1 = std::fs::read(out_dir.join("wave.arc")).unwrap();
    assert!(out_dir.join("manifest.json").exists());

    // rerun is byte-identical (deterministic pipeline, no timestamps)
    let o = run(&["profile", "--config", cfg_s, "--out", out_s]);
    assert!(o.status.success());
    let arc2 = std::fs::read(out_dir.join("wave.arc")).unwrap();
    assert_eq!(arc1, arc2);

    let o = run(&["classify", "--config", cfg_s, "--out", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("CaseA"), "unexpected output: {stdout}");

    let o = run(&["spectrum", "--config", cfg_s, "--out", out_s, "--suite", "quick"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out_dir.join("spectrum.csv").exists());
}

#[test]
fn singular_wave_matrix_is_input_error() {
    let dir = tmp("badk");
    let cfg = write_config(&dir, &LAMOM.replace("[[0.05, 0.01], [0.0, 0.04898979485566356]]", "[[0.05, 0.05], [0.02, 0.02]]"));
    let o = run(&["profile", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_is_input_error() {
    let o = run(&["classify"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["profile", "--config", "/nonexistent/nope.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_without_archive_is_input_error() {
    let dir = tmp("noarc");
    let cfg = write_config(&dir, LAMOM);
    let out_dir = dir.join("out");
    let o = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn archive_cache_is_reused() {
    let dir = tmp("cache");
    let cfg = write_config(&dir, LAMOM);
    let cache = dir.join("cache");
    std::fs::create_dir_all(&cache).unwrap();
    let out_a = dir.join("out_a");
    let out_b = dir.join("out_b");
    let o = Command::new(bin())
        .args(["profile", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
        .env("PATTERNSPECTRA_CACHE", &cache)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // classify from a fresh output dir finds the archive via the cache
    let o = Command::new(bin())
        .args(["classify", "--config", cfg.to_str().unwrap(), "--out", out_b.to_str().unwrap()])
        .env("PATTERNSPECTRA_CACHE", &cache)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
