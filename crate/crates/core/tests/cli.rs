use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/golden.toml")
}

fn reuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reuse"))
        .args(args)
        .env_remove("REUSE_WORKERS")
        .output()
        .expect("binary runs")
}

fn run_golden(dir: &Path, extra: &[&str]) -> Output {
    let cfg = golden_config();
    let mut args = vec!["run", cfg.to_str().unwrap(), "--output-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    reuse(&args)
}

#[test]
fn run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_golden(tmp.path(), &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.jsonl", "panel.json", "metrics.csv"] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
    let lines = std::fs::read_to_string(tmp.path().join("trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn zero_iterations_marks_panel_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_golden(tmp.path(), &["--iterations", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let panel: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("panel.json")).unwrap()).unwrap();
    assert_eq!(panel["empty"], true);
    assert!(panel["utility"].is_null());
}

#[test]
fn unknown_config_key_is_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[search]\npopulaton = 4\n").unwrap();
    let out = reuse(&[
        "run",
        cfg.to_str().unwrap(),
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("populaton"));
}

#[test]
fn missing_config_is_bad_input() {
    let out = reuse(&["run", "/nonexistent/reuse.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_write_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = run_golden(&blocker.join("sub"), &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn workers_env_and_flag_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("flag"), tmp.path().join("env"));
    assert!(run_golden(&a, &["--workers", "1"]).status.success());
    let cfg = golden_config();
    let out = Command::new(env!("CARGO_BIN_EXE_reuse"))
        .args(["run", cfg.to_str().unwrap(), "--output-dir", b.to_str().unwrap()])
        .env("REUSE_WORKERS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["trace.jsonl", "panel.json", "metrics.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn analyze_reports_are_csv() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_golden(tmp.path(), &[]).status.success());
    let trace = tmp.path().join("trace.jsonl");
    for (report, first_column) in [
        ("budget", "budget"),
        ("funnel", "iteration"),
        ("consistency", "scope"),
        ("prepost", "set"),
    ] {
        let mut args = vec!["analyze", trace.to_str().unwrap(), "--report", report];
        if report == "consistency" {
            args.extend(["--k-set", "1,2"]);
        }
        let out = reuse(&args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{report}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8(out.stdout).unwrap();
        let header = text.lines().next().unwrap_or_default();
        assert!(header.starts_with(first_column), "{report}: {header}");
        assert!(text.lines().count() > 1, "{report} has no rows");
    }
}

#[test]
fn analyze_rejects_corrupt_trace_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_golden(tmp.path(), &[]).status.success());
    let trace = tmp.path().join("trace.jsonl");
    let mut text = std::fs::read_to_string(&trace).unwrap();
    text.push_str("{not json}\n");
    std::fs::write(&trace, text).unwrap();
    let out = reuse(&["analyze", trace.to_str().unwrap(), "--report", "budget"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('3'));
}

#[test]
fn analyze_rejects_malformed_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_golden(tmp.path(), &[]).status.success());
    let trace = tmp.path().join("trace.jsonl");
    let out = reuse(&[
        "analyze",
        trace.to_str().unwrap(),
        "--report",
        "prepost",
        "--hit-thresholds",
        "1,2,3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_suite_passes_with_few_runs() {
    let out = reuse(&["verify", "--suite", "funnel", "--runs", "20"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| !l.starts_with("FAIL")));
    assert!(stdout.contains("PASS"));
}

#[test]
fn bad_suite_name_is_bad_input() {
    assert_eq!(reuse(&["verify", "--suite", "nonsense"]).status.code(), Some(2));
}
