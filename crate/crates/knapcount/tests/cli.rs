use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use knapcount::instance::parse_instance;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_knapcount"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("one JSON record")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("knapcount-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn generate_uniform() {
    let o = run(&["generate", "--kind", "uniform", "--n", "10", "--T", "1000", "--seed", "7"]);
    assert!(o.status.success());
    let inst = parse_instance(&stdout(&o)).unwrap();
    assert_eq!(inst.n(), 10);
    assert!(inst.weights().iter().all(|w| *w >= 1u32.into() && *w <= 1000u32.into()));
    assert_eq!(stdout(&run(&["generate", "--kind", "uniform", "--n", "10", "--T", "1000", "--seed", "7"])), stdout(&o));
}

#[test]
fn generate_to_file_is_reproducible() {
    let (a, b) = (scratch("a.txt"), scratch("b.txt"));
    for p in [&a, &b] {
        let o = run(&["generate", "--kind", "uniform", "--n", "10", "--T", "1000", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn generate_bounded_ratio() {
    let o = run(&["generate", "--kind", "bounded_ratio", "--ell", "4", "--n", "50", "--T", "1000", "--seed", "1"]);
    let inst = parse_instance(&stdout(&o)).unwrap();
    assert!(inst.weights().iter().all(|w| *w > 250u32.into() && *w <= 500u32.into()));
}

#[test]
fn generate_custom_classes() {
    let o = run(&["generate", "--kind", "custom_classes", "--classes", "2:3,8:5", "--n", "8", "--T", "1000"]);
    assert!(o.status.success());
    assert_eq!(parse_instance(&stdout(&o)).unwrap().n(), 8);
    let bad = run(&["generate", "--kind", "custom_classes", "--classes", "2:3", "--n", "8", "--T", "1000"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn count_exact_enum() {
    let o = run(&["count", "--weights", "2,3,5", "--capacity", "5", "--algo", "exact-enum"]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["estimate"], "5");
    assert_eq!(v["n"], 3);
    let dp = json(&run(&["count", "--weights", "2,3,5", "--capacity", "5", "--algo", "exact-dp"]));
    assert_eq!(dp["estimate"], "5");
}

#[test]
fn count_reads_file_and_stdin() {
    let p = scratch("inst.txt");
    std::fs::write(&p, "3 5\n2 3 5\n").unwrap();
    let a = json(&run(&["count", p.to_str().unwrap(), "--algo", "exact-enum"]));
    assert_eq!(a["estimate"], "5");
    let mut child = bin().args(["count", "-", "--algo", "exact-enum"]).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(b"3 5\n2 3 5\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(json(&o)["estimate"], "5");
    assert_eq!(json(&o)["digest"], a["digest"]);
}

#[test]
fn count_subquad_has_diagnostics() {
    let args = ["count", "--weights", "2,3,5,7,11,13,4,6", "--capacity", "20", "--algo", "subquad", "--epsilon", "0.25", "--seed", "1"];
    let o = run(&args);
    assert!(o.status.success());
    let v = json(&o);
    assert!(v["diagnostics"]["ell"].is_u64());
    assert!(v.get("times").is_none());
    // identical command, identical bytes
    assert_eq!(run(&args).stdout, o.stdout);
    let est: f64 = v["estimate"].as_str().unwrap().parse().unwrap();
    // 84 solutions by enumeration
    assert!((est - 84.0).abs() <= 0.25 * 84.0);
}

#[test]
fn count_timings_on_request() {
    let v = json(&run(&["count", "--weights", "2,3,5,7", "--capacity", "9", "--timings"]));
    assert!(v["times"]["total_ms"].is_u64());
}

#[test]
fn count_dyer_repeats_reports_median() {
    let v = json(&run(&["count", "--weights", "2,3,5,7,11,13,4,6", "--capacity", "20", "--algo", "dyer", "--repeats", "5"]));
    let mut all: Vec<f64> = v["estimates"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().parse().unwrap()).collect();
    assert_eq!(all.len(), 5);
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let est: f64 = v["estimate"].as_str().unwrap().parse().unwrap();
    assert_eq!(est, all[2]);
}

#[test]
fn count_strict_abort_exits_one() {
    let inst = run(&["generate", "--kind", "bounded_ratio", "--ell", "8", "--n", "300", "--T", "1000000000000", "--seed", "2"]);
    let p = scratch("big.txt");
    std::fs::write(&p, &inst.stdout).unwrap();
    let o = run(&["count", p.to_str().unwrap(), "--time-budget-ms", "0", "--strict"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["aborted"], true);
    let lax = run(&["count", p.to_str().unwrap(), "--time-budget-ms", "0"]);
    assert_eq!(lax.status.code(), Some(0));
}

#[test]
fn count_usage_errors() {
    assert_eq!(run(&["count", "--weights", "2,9", "--capacity", "5"]).status.code(), Some(2));
    assert_eq!(run(&["count"]).status.code(), Some(2));
    assert_eq!(run(&["count", "--weights", "2,3", "--capacity", "5", "--epsilon", "0.9"]).status.code(), Some(2));
    assert_eq!(run(&["count", "/nonexistent/file"]).status.code(), Some(2));
}

#[test]
fn verify_unknown_suite() {
    let o = run(&["verify", "--suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn verify_conv_rows() {
    let o = run(&["verify", "--suite", "conv", "--trials", "3", "--seed", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("suite,case,expected,got,pass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("conv,") && r.ends_with(",pass")));
}

#[test]
fn verify_structure_rows() {
    let o = run(&["verify", "--suite", "structure", "--trials", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().skip(1).all(|r| r.starts_with("structure,")));
}

#[test]
fn bench_schema() {
    let o = run(&["bench", "--sizes", "64,128", "--algo", "subquad"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5 && r[1] == "subquad"));
    let per_size = rows.iter().filter(|r| r[0] == "64").count();
    assert_eq!(rows.len(), 2 * per_size);
    let again = stdout(&run(&["bench", "--sizes", "64,128", "--algo", "subquad"]));
    let digests = |s: &str| s.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(digests(&out), digests(&again));
}

#[test]
fn bench_both_tags_rows() {
    let out = stdout(&run(&["bench", "--sizes", "64", "--algo", "both"]));
    assert!(out.lines().any(|l| l.contains(",subquad,")));
    assert!(out.lines().any(|l| l.contains(",dyer,")));
}

#[test]
fn oracle_subcommand() {
    let p = scratch("o.txt");
    std::fs::write(&p, "3 5\n2 3 5\n").unwrap();
    let path = p.to_str().unwrap();
    assert_eq!(json(&run(&["oracle", path]))["count"], "5");
    assert_eq!(json(&run(&["oracle", path, "--method", "dp"]))["count"], "5");
    assert_eq!(json(&run(&["oracle", path, "--band", "5,10"]))["count"], "3");
    assert_eq!(run(&["oracle", path, "--band", "5"]).status.code(), Some(2));
}

#[test]
fn conv_selftest_passes() {
    let o = run(&["conv-selftest", "--trials", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for suite in ["ntt,", "witness,", "conv,"] {
        assert_eq!(out.lines().filter(|l| l.starts_with(suite)).count(), 2);
    }
}

#[test]
fn in_process_entry_point() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = knapcount::cli::run_with(["knapcount", "count", "--weights", "1,1,1", "--capacity", "3"], &mut out, &mut err);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(v["estimate"], "8");
    let code = knapcount::cli::run_with(["knapcount", "--help"], &mut out, &mut err);
    assert_eq!(code, 0);
}
