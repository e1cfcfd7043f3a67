use std::path::Path;
use std::process::Command;

use lie_transport::commands::RunSummary;

const BIN: &str = env!("CARGO_BIN_EXE_lie-transport");

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], dir: &Path, out: &str) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(dir.join(out))
        .env("LT_THREADS", "1")
        .output()
        .unwrap()
}

fn summary(dir: &Path, out: &str) -> RunSummary {
    let text = std::fs::read_to_string(dir.join(out).join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const SMALL: &str = r#"{"grid": {"dim": 2, "sizes": [16, 16]}, "tau": [0.1, -0.05], "seed": 7}"#;

#[test]
fn solve_summaries_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    for out in ["a", "b"] {
        let o = run(&["--config", cfg, "solve"], dir.path(), out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (summary(dir.path(), "a"), summary(dir.path(), "b"));
    assert_eq!(a, b);
    assert!(a.passed);
    assert_eq!(a.command, "solve");
    assert_eq!(a.seed, 7);
    assert!(dir.path().join("a").join("timings.json").exists());
}

#[test]
fn config_hash_ignores_formatting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["--config", cfg.to_str().unwrap(), "verify"], dir.path(), "a");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let spaced = dir.path().join("spaced.json");
    std::fs::write(&spaced, r#"{ "seed": 7,   "tau": [0.1, -0.05],
        "grid": { "sizes": [16, 16], "dim": 2 } }"#)
        .unwrap();
    let o = run(&["--config", spaced.to_str().unwrap(), "verify"], dir.path(), "b");
    assert!(o.status.success());
    assert_eq!(summary(dir.path(), "a").config_hash, summary(dir.path(), "b").config_hash);
}

#[test]
fn unknown_config_keys_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"grid": {"dim": 2, "sizes": [8, 8]}, "bogus": 1}"#);
    let o = run(&["--config", cfg.to_str().unwrap(), "verify"], dir.path(), "a");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_of_window_tau_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["--config", cfg.to_str().unwrap(), "solve", "--tau", "0.6,0"], dir.path(), "a");
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn audit_reports_no_violations_on_a_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let args = ["--config", cfg.to_str().unwrap(), "audit", "--samples", "200", "--k-max", "5"];
    let o = run(&args, dir.path(), "a");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&args, dir.path(), "b");
    assert!(o.status.success());
    let a = summary(dir.path(), "a");
    assert_eq!(a, summary(dir.path(), "b"));
    assert!(a.passed);
}
