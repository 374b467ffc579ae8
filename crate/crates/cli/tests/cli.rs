use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kqkp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kqkp"))
        .args(args)
        .env_remove("KQKP_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout));
    })
}

fn generate(dir: &Path, n: usize, density: u32, seed: u64) -> PathBuf {
    let out = kqkp(&[
        "generate",
        "--n",
        &n.to_string(),
        "--density",
        &density.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

#[test]
fn trivial_instance_is_optimal() {
    let dir = tempfile::tempdir().unwrap();
    // pick 2 of 3; items 0 and 1 together are worth 2*4 + 1 + 2 = 11
    let p = write(dir.path(), "t.txt", "3 2 5\n2 3 4\n1 4 0\n4 2 0\n0 0 3\n");
    let out = kqkp(&["solve", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["status"], "Optimal");
    assert_eq!(v["value"], 11);
    assert_eq!(v["selected"], serde_json::json!([0, 1]));
    assert_eq!(v["config"]["time_limit"], 10800.0);
}

#[test]
fn malformed_input_cites_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.txt", "3 1 5\n1 2 x\n0 0 0\n0 0 0\n0 0 0\n");
    let out = kqkp(&["solve", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn infeasible_cardinality_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "inf.txt", "3 3 5\n2 3 4\n0 0 0\n0 0 0\n0 0 0\n");
    assert_eq!(kqkp(&["solve", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn nonpositive_tolerance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "t.txt", "3 1 5\n1 2 3\n0 0 0\n0 0 0\n0 0 0\n");
    for tol in ["0", "-1e-5"] {
        let out = kqkp(&["solve", p.to_str().unwrap(), &format!("--tol={tol}")]);
        assert_eq!(out.status.code(), Some(1), "tol {tol}");
    }
}

#[test]
fn solve_agrees_with_check() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), 12, 50, 7);
    let path = p.to_str().unwrap();
    let check = kqkp(&["check", path]);
    assert_eq!(check.status.code(), Some(0));
    let c = json(&check);
    assert_eq!(c["agree"], true);
    let s = json(&kqkp(&["solve", path]));
    assert_eq!(s["value"], c["oracle_value"]);
}

#[test]
fn cut_bound_is_not_above_plain_bound() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), 14, 75, 2);
    let path = p.to_str().unwrap();
    let sdp = json(&kqkp(&["bound", path, "--mode", "sdp"]));
    let met = json(&kqkp(&["bound", path, "--mode", "sdpmet"]));
    let opt = json(&kqkp(&["check", path]))["oracle_value"].as_f64().unwrap();
    let (b0, b1) = (sdp["bound"].as_f64().unwrap(), met["bound"].as_f64().unwrap());
    assert!(b1 <= b0 + 1e-6, "{b1} > {b0}");
    assert!(b1 >= opt - 1e-6, "{b1} < {opt}");
    assert!(met["heuristic"].as_f64().unwrap() <= opt);
}

#[test]
fn zero_profits_give_zero_bound() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "z.txt", "4 2 5\n1 2 3 4\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n");
    let v = json(&kqkp(&["bound", p.to_str().unwrap(), "--mode", "sdp"]));
    assert!(v["bound"].as_f64().unwrap().abs() < 1e-4, "{}", v["bound"]);
}

#[test]
fn trace_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), 16, 100, 4);
    let traces = dir.path().join("traces");
    let out = kqkp(&["solve", p.to_str().unwrap(), "--trace-dir", traces.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stem = p.file_stem().unwrap().to_str().unwrap();
    let nodes = std::fs::read_to_string(traces.join(format!("{stem}.nodes.csv"))).unwrap();
    let evals = std::fs::read_to_string(traces.join(format!("{stem}.bundle.csv"))).unwrap();
    assert!(nodes.starts_with("id,parent,"));
    assert!(nodes.lines().count() >= 2);
    assert!(evals.lines().count() >= 2);
}

#[test]
fn bench_on_empty_directory_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = kqkp(&["bench", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "n,delta,gap_root_pct,time_s,nodes,solved,instances");
}

#[test]
fn bench_without_time_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        generate(dir.path(), 10, 50, seed);
        generate(dir.path(), 12, 100, seed);
    }
    let d = dir.path().to_str().unwrap();
    let a = kqkp(&["bench", d, "--no-time", "--threads", "2"]);
    let b = kqkp(&["bench", d, "--no-time"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
}
