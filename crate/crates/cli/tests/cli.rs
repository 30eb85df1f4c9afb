use std::path::Path;
use std::process::{Command, Output};

use rdnr_core::cases;
use rdnr_core::ccg::{Instance, InstanceOptions};
use serde_json::Value;

fn rdnr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdnr")).args(args).arg("--out").arg(out).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("error line on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn solve_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdnr(&["solve", "--case", "case6.json", "--eps", "1e-4"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["topology.json", "topology.dot", "resizing.csv", "convergence.csv", "summary.json", "timings.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["schema"], "rdnr-summary/1");
    assert!(s["gap"].as_f64().unwrap() <= 1e-4);
    assert_eq!(s["worst_case_w"].as_array().unwrap().len(), 2);
    let topo = json(&dir.path().join("topology.json"));
    let closed = topo.as_object().unwrap().values().filter(|v| v.as_u64() == Some(1)).count();
    assert_eq!(closed, 5);
}

#[test]
fn repeated_runs_write_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(rdnr(&["solve", "--seed", "11"], d.path()).status.success());
    }
    for f in ["resizing.csv", "convergence.csv", "summary.json", "topology.json", "topology.dot"] {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(f)).unwrap();
        assert_eq!(read(&a), read(&b), "{f}");
    }
}

#[test]
fn missing_case_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdnr(&["solve", "--case", "/no/such/case.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = error_of(&o);
    assert_eq!(e["error"]["kind"], "case-not-found");
    assert!(e["error"]["message"].as_str().unwrap().starts_with("case not found"));
}

#[test]
fn zero_budget_is_noted() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rdnr(&["solve", "--gamma-t", "0"], dir.path()).status.success());
    let s = json(&dir.path().join("summary.json"));
    let notes = s["notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("singleton")));
}

#[test]
fn sensitivity_needs_a_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdnr(&["sensitivity"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["error"]["message"], "solve first or pass --solve");

    assert!(rdnr(&["solve"], dir.path()).status.success());
    let o = rdnr(&["sensitivity"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let inst = Instance::new(&cases::case6(), &InstanceOptions::default()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("sensitivity.csv")).unwrap();
    assert_eq!(text.lines().count() - 1, inst.unc.num_rows() + inst.unc.xi_rows.len());
    let j = json(&dir.path().join("sensitivity.json"));
    assert!(j["duality_gap"].as_f64().unwrap() <= 1e-6);

    // a different budget does not reuse the stored solution
    let o = rdnr(&["sensitivity", "--gamma-t", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_reports_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdnr(&["compare"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("compare.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let iters = |r: &csv::StringRecord| r[1].parse::<usize>().unwrap();
    let obj = |r: &csv::StringRecord| r[5].parse::<f64>().unwrap();
    assert_eq!(&rows[0][0], "mapping-ccg");
    assert!(iters(&rows[0]) <= iters(&rows[1]));
    assert!((obj(&rows[0]) - obj(&rows[1])).abs() <= 1e-3);
    assert!(dir.path().join("compare_log.csv").is_file());
}

#[test]
fn capped_benders_reports_its_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdnr(&["compare", "--max-iter", "2"], dir.path());
    assert!(o.status.success());
    let mut rd = csv::Reader::from_path(dir.path().join("compare.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(&rows[1][4], "iteration-limit");
    assert!(rows[1][8].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn oracle_check_passes_on_case6() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rdnr"))
        .args(["oracle-check", "--samples", "10", "--out"])
        .arg(dir.path())
        .env("RDNR_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| !l.starts_with("FAIL")));
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rdnr")).args(["solve", "--out"]).arg(dir.path()).env("RDNR_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["error"]["kind"], "config");
}
