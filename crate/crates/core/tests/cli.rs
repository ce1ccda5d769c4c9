use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rigidkit");

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs"))
}

fn rigidkit(args: &[&str], out_dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RIGIDKIT_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

#[test]
fn check_prints_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigidkit(&["check", &config("flat_plane.toml"), "--set", "family.k=3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("k = 3"), "{text}");
    assert!(text.contains("origin = [0.0, 0.0]"), "{text}");
    // validation writes nothing
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn run_writes_into_the_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigidkit(&["run", &config("cylinder.toml")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cylinder/run.json")).unwrap()).unwrap();
    assert!(report["energies"]["modified_bending"].as_f64().unwrap() < 1e-7);
    assert!(dir.path().join("cylinder/resolved.toml").exists());
}

#[test]
fn sweep_param_sets_the_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigidkit(
        &["sweep", &config("perturbation.toml"), "--param", "k=1..3", "--set", "domain.nodes=17"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("perturbation/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("k,E_s,E_b,E_bS,lp_to_final,w1p_to_final,cauchy_increment,"));
}

#[test]
fn exit_codes_distinguish_config_errors_and_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigidkit(&["check", &config("flat_plane.toml"), "--set", "target.metric=spherre"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target.metric"));

    let out = rigidkit(&["run", "/nonexistent/config.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = rigidkit(&["sweep", &config("flat_plane.toml"), "--param", "t=1..2"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = rigidkit(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = rigidkit(&["run", &config("curved_target_violation.toml")], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hypothesis"));

    let out = rigidkit(
        &["run", &config("curved_target_violation.toml"), "--set", "rigidity.epsilon=0.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn every_shipped_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = rigidkit(&["check", &path.display().to_string()], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", path.display());
    }
}
