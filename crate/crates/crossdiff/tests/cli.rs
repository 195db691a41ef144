//! End-to-end checks of the command-line interface: subcommands, exit-code
//! contract (0 ok, 1 audit failure, 2 config error, 3 numerical failure),
//! artifact schemas, and byte-level determinism.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossdiff"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("xd-cli-{tag}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_run_config(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        format!(
            "[model]\nname = ion-transport\nspecies = 2\n\
             [grid]\ncells = 32\n\
             [initial]\nmean = 0.25, 0.25\namplitude = -0.05, -0.05\n\
             [scheme]\ntau = 1e-3\n\
             [experiment]\nkind = run\nt_final = 5e-3\nseed = 11\n\
             [output]\ndir = {}\nprefix = smoke\n",
            dir.display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn validate_reports_and_exits_zero() {
    let out = bin()
        .args(["validate", "ion-transport", "--samples", "500"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[pass]"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn validate_unknown_model_is_config_error() {
    let out = bin().args(["validate", "mystery-model"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constants_prints_the_dissipation_constant() {
    let out = bin().args(["constants", "ion-transport"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("constants are JSON");
    assert_eq!(json["c0"], 2.0);
    assert_eq!(json["p0"], 1.0);
    assert_eq!(json["delta"], 0.5);
    assert_eq!(json["a"], 1.0);
}

#[test]
fn run_writes_artifacts_and_passes() {
    let dir = temp_dir("run");
    let cfg = small_run_config(&dir);
    let out = bin().args(["run"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["smoke_snapshots.csv", "smoke_series.csv", "smoke_summary.json"] {
        assert!(dir.join(artifact).exists(), "missing {artifact}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("smoke_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["constants"]["c0"], 2.0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_config_gives_byte_identical_output() {
    let dir = temp_dir("det");
    let cfg = small_run_config(&dir);
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let out = bin().args(["run"]).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        csvs.push((
            std::fs::read(dir.join("smoke_snapshots.csv")).unwrap(),
            std::fs::read(dir.join("smoke_series.csv")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = temp_dir("badkey");
    let path = dir.join("bad.cfg");
    std::fs::write(
        &path,
        "[model]\nname = ion-transport\ntypo_key = 3\n[initial]\nmean = 0.3, 0.3\n",
    )
    .unwrap();
    let out = bin().args(["run"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("typo_key"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn kind_mismatch_exits_with_config_error() {
    let dir = temp_dir("kind");
    let cfg = small_run_config(&dir);
    let out = bin().args(["decay"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn uniqueness_requires_unit_occupancy() {
    let dir = temp_dir("uniq");
    let path = dir.join("u.cfg");
    std::fs::write(
        &path,
        format!(
            "[model]\nname = skt-volume\n\
             [grid]\ncells = 16\n\
             [initial]\nmean = 0.3, 0.3\namplitude = 0.05, -0.05\n\
             [scheme]\ntau = 1e-3\n\
             [experiment]\nkind = unique\nt_final = 2e-3\n\
             [output]\ndir = {}\n",
            dir.display()
        ),
    )
    .unwrap();
    let out = bin().args(["unique"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn positivity_requires_divergent_mobility() {
    let dir = temp_dir("pos");
    let path = dir.join("p.cfg");
    std::fs::write(
        &path,
        format!(
            "[model]\nname = ion-transport\nspecies = 1\n\
             [grid]\ncells = 16\n\
             [initial]\nmean = 0.5\namplitude = 0.1\n\
             [scheme]\ntau = 1e-3\n\
             [experiment]\nkind = positivity\nt_final = 2e-3\n\
             [output]\ndir = {}\n",
            dir.display()
        ),
    )
    .unwrap();
    let out = bin().args(["positivity"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
