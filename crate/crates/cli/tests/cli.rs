use std::path::Path;
use std::process::{Command, Output};

fn hyperred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperred")).args(args).output().expect("spawn hyperred")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn small_diffusion(dir: &Path) -> String {
    let out = dir.join("out");
    write_config(dir, &format!(r#"{{"problem": "diffusion", "nx": 6, "ny": 6, "mu": 0.3, "t_final": 0.02, "timing_repeats": 1, "output_dir": "{}"}}"#, out.display()))
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_diffusion(dir.path());

    let o = hyperred(&["offline", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("21 snapshots"));

    let o = hyperred(&["merge", &cfg, "--targets", "2,4,6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);

    for method in ["none", "deim", "qdeim_e", "sopt", "eqp"] {
        let o = hyperred(&["online", &cfg, "--method", method]);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(record["method"], method);
        assert!(record["error"]["combined"].as_f64().unwrap().is_finite());
    }

    let o = hyperred(&["report", &cfg]);
    assert!(o.status.success());
    assert!(dir.path().join("out/report/records.csv").exists());
    assert!(dir.path().join("out/report/front_eqp.csv").exists());

    let o = hyperred(&["pareto", &cfg]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() >= 2);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_diffusion(dir.path());
    let o = hyperred(&["online", &cfg, "--method", "sopt", "--nsr", "9", "--er", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(record["n_points"], 9);
    assert_eq!(record["er"], 3.0);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json").display().to_string();
    assert_eq!(hyperred(&["offline", &missing]).status.code(), Some(2));

    let bad = write_config(dir.path(), r#"{"problem": "diffusion", "mu": 0.9}"#);
    let o = hyperred(&["offline", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let cfg = small_diffusion(dir.path());
    let o = hyperred(&["online", &cfg, "--method", "sopt", "--nsr", "1", "--er", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = hyperred(&["online", &cfg, "--mode", "predictive"]);
    assert_eq!(o.status.code(), Some(2));
}
