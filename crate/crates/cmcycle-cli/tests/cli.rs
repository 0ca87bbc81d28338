//! The binary's documented behaviour: example outputs, exit codes and the
//! on-disk layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join(format!("{cmd}.toml"));
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cmcycle"))
        .arg(cmd)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn records(out: &Output) -> Vec<Value> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn fraction(r: &Value) -> String {
    format!("{}/{}", r["value"]["num"].as_str().unwrap(), r["value"]["den"].as_str().unwrap())
}

#[test]
fn constants_rows_for_q3() {
    let dir = tempfile::tempdir().unwrap();
    let rows = records(&run(dir.path(), "constants", "p = 3\nh = 1\n", &[]));
    let values: Vec<String> = rows.iter().map(fraction).collect();
    assert_eq!(values[..2], ["3/4".to_owned(), "4/3".to_owned()]);
    assert!(rows.iter().all(|r| r["fingerprint"] == rows[0]["fingerprint"]));
}

#[test]
fn oracle_compare_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "p = 3\n[family]\np = [3]\ncount = 2\n[oracle]\ndepth = 2\n";
    let rows = records(&run(dir.path(), "oracle-compare", cfg, &[]));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r["detail"]["status"], "MATCH");
        assert_eq!(r["detail"]["exhaustive"].as_str().unwrap(), fraction(r));
    }
}

#[test]
fn verify_afl_reports_a_global_sign() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "p = 3\n[family]\np = [3, 5]\ncount = 5\n";
    let rows = records(&run(dir.path(), "verify-afl", cfg, &[]));
    let (cases, summary) = rows.split_at(rows.len() - 1);
    assert_eq!(cases.len(), 10);
    assert!(cases.iter().all(|r| fraction(r) == "1/1"));
    assert_eq!(summary[0]["detail"]["sign"], "+1");
}

#[test]
fn writes_jsonl_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().join("out");
    let cfg = "p = 3\n[j]\ncoeffs = [[1, 1], [1, 0]]\n[test_function]\nn = 1\n";
    let o = run(dir.path(), "intersect", cfg, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let jsonl = std::fs::read_to_string(out.join("intersect.jsonl")).unwrap();
    let csv = std::fs::read_to_string(out.join("intersect.csv")).unwrap();
    assert_eq!(jsonl.lines().count() + 1, csv.lines().count());
    let r: Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(r["q_power_form"]["q"], 3);
    assert_eq!(r["wall_ms"], 0);
}

#[test]
fn fingerprint_tracks_settings_not_threads() {
    let dir = tempfile::tempdir().unwrap();
    let fp = |extra: &[&str]| records(&run(dir.path(), "constants", "p = 5\n", extra))[0]["fingerprint"].clone();
    assert_eq!(fp(&[]), fp(&["--threads", "2"]));
    assert_ne!(fp(&[]), fp(&["--seed", "9"]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run(dir.path(), "constants", "p = 3\ncolour = 1\n", &[]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("line 2"));
    let degenerate = run(dir.path(), "intersect", "p = 3\n[j]\ncoeffs = [[0, 0], [0, 0]]\n", &[]);
    assert_eq!(degenerate.status.code(), Some(2));
    let cfg = "p = 3\n[family]\ncount = 1\n[oracle]\ndepth = 3\n";
    let budget = run(dir.path(), "oracle-compare", cfg, &["--cell-budget", "1000"]);
    assert_eq!(budget.status.code(), Some(3));
}
