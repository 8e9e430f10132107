use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("multisym-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multisym")).args(args).output().unwrap()
}

fn run_config(task: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![task, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn passing_scenario_exits_zero() {
    let out = scratch("pass");
    let o = run_config("verify-xh", &scenarios().join("oscillator_verify_xh.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS"));
    assert!(stdout.trim_end().ends_with("verify-xh: passed"));
    assert!(out.join("verify_xh.csv").exists());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["seed"], 7);
}

#[test]
fn failing_check_exits_one() {
    let dir = scratch("fail");
    let cfg = write_config(
        &dir,
        r#"{"task": "foliation-check", "theory": {"name": "free-scalar", "mass": 0.0},
            "hj": {"builtin": "twisted", "domain": {"lower": [-1, -1, -1], "upper": [1, 1, 1]}, "lattice": 2}}"#,
    );
    let o = run_config("foliation-check", &cfg, &dir.join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn config_errors_exit_two() {
    let out = scratch("bad");
    let o = run_config("verify-xh", &scenarios().join("bad_potential.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 7"));

    // task in the file disagrees with the command line
    let o = run_config("integrate", &scenarios().join("oscillator_verify_xh.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));

    let dir = scratch("typo");
    let cfg = write_config(&dir, r#"{"task": "verify-xh", "theory": {"name": "oscillator"}, "sampels": 3}"#);
    let o = run_config("verify-xh", &cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampels"));

    let o = run(&["integrate", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["no-such-task", "--config", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let dir = scratch("diverge");
    let cfg = write_config(
        &dir,
        r#"{"task": "integrate", "theory": {"name": "free-scalar", "mass": 1.0},
            "grid": {"nx": 32, "dt_ratio": 4.0, "t_final": 50.0, "cfl": null},
            "integrate": {"initial": {"kind": "gaussian", "amplitude": 1.0, "center": 3.0, "width": 0.3}, "oracle": false}}"#,
    );
    let o = run_config("integrate", &cfg, &dir.join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical_and_seed_overrides() {
    let cfg = scenarios().join("oscillator_verify_xh.json");
    let (a, b, c) = (scratch("det-a"), scratch("det-b"), scratch("det-c"));
    for (dir, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let o = run_config("verify-xh", &cfg, dir, &["--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert!(!csvs(&a).is_empty());
    assert_eq!(csvs(&a), csvs(&b));
    assert_ne!(csvs(&a), csvs(&c));
    let summary = fs::read_to_string(a.join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 3"));
}

#[test]
fn help_and_version() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("--config"));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}
