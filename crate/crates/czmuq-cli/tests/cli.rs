//! Binary-level checks: exit codes, artifact writing, and seed handling.

use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};

fn czmuq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_czmuq"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn unknown_subcommand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = czmuq(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "unknown.toml", "[wombat]\nlegs = 4\n");
    let out = czmuq(dir.path(), &["simulate", "--config", "unknown.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    write(dir.path(), "syntax.toml", "= 3\n");
    let out = czmuq(dir.path(), &["simulate", "--config", "syntax.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_observations_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = czmuq(dir.path(), &["calibrate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("observations.csv"));
}

#[test]
fn malformed_observations_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "observations.csv",
        "speed,gap,load\n5.08,1.0,10.0\n",
    );
    let out = czmuq(dir.path(), &["calibrate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn integrator_blowup_exits_4() {
    // A saturated flow rate at the float ceiling with a glacial loading
    // rate: the first plastic increment overflows and the run must stop
    // with the numerical exit code instead of writing garbage curves.
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "blowup.toml",
        r#"
[geometry]
n_elements = 10

[parameters]
flow_rate = 1e308

[loading]
rates = [1e-6]
delta_max = 20.0
n_steps = 2
"#,
    );
    let out = czmuq(dir.path(), &["simulate", "--config", "blowup.toml"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_writes_curves_and_manifest_with_matching_digest() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "small.toml",
        r#"
[geometry]
n_elements = 10

[loading]
rates = [5.08]
delta_max = 10.0
n_steps = 20
"#,
    );
    let out = czmuq(dir.path(), &["simulate", "--config", "small.toml"]);
    assert!(
        out.status.success(),
        "simulate failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curves = dir.path().join("out").join("curves.csv");
    let digest = hex::encode(Sha256::digest(std::fs::read(&curves).unwrap()));
    let manifest = std::fs::read_to_string(dir.path().join("out").join("manifest.toml")).unwrap();
    assert!(
        manifest.contains(&format!("\"curves.csv\" = \"{digest}\"")),
        "manifest does not carry the artifact digest:\n{manifest}"
    );
    assert!(dir.path().join("out").join("resolved_config.toml").exists());
}

#[test]
fn global_seed_controls_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "synth.toml",
        r#"
[geometry]
n_elements = 10

[loading]
rates = [5.08]
delta_max = 10.0
n_steps = 20

[synth]
n_points = 5
noise_mode = "relative_peak"
noise_fraction = 0.05
"#,
    );
    let run = |out_dir: &str, seed: &str| {
        let out = czmuq(
            dir.path(),
            &["synth", "--config", "synth.toml", "--out-dir", out_dir, "--seed", seed],
        );
        assert!(
            out.status.success(),
            "synth failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(dir.path().join(out_dir).join("observations.csv")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b, "same seed must reproduce the observations byte for byte");
    assert_ne!(a, c, "different seeds must perturb the noise draws");
}
