use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use obspart::maximize::{Solver, SolverConfig};
use obspart::measures::Metric;
use obspart::partition::solve_partition;
use obspart::sysmodel::{contribution_gramians, load_system};
use obspart_cli::report::{Output as ReportOutput, RunReport};
use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn obspart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obspart"))
        .args(args)
        .env_remove("OBSPART_THREADS")
        .output()
        .unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error")
}

#[test]
fn partition_run_is_pinned_by_seed() {
    let args = ["partition", "--system", &fixture("chain5.json"), "--kappa", "2", "--metric", "logdet", "--seed", "7"];
    let first = obspart(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, obspart(&args).stdout);

    let report: RunReport = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(report.seed, Some(7));
    let ReportOutput::Partition(out) = &report.output else {
        panic!("not a partition report");
    };
    let sys = load_system(fixture("chain5.json")).unwrap();
    let g = contribution_gramians(&sys, 1000).unwrap();
    let cfg = SolverConfig { seed: 7, ..SolverConfig::default() };
    let (p, rep) = solve_partition(&g, 2, Metric::logdet(1e-10), Solver::Greedy, &cfg).unwrap();
    let blocks: Vec<Vec<usize>> = out.blocks.iter().map(|b| b.states.clone()).collect();
    assert_eq!(blocks, p.blocks);
    assert_eq!(out.total.shifted, rep.total);
    assert_eq!(out.total.raw, rep.raw_total);
    assert_eq!(out.blocks[0].labels[0], "s0");
}

#[test]
fn too_many_sensors_is_a_validation_error() {
    let out = obspart(&["place", "--system", &fixture("triangles6.json"), "--sensors", "99"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "infeasible");
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("99") && msg.contains('6'), "{msg}");
    assert!(out.stdout.is_empty());
}

#[test]
fn single_block_modularity_is_zero() {
    let out = obspart(&["modularity", "--system", &fixture("triangles6.json"), "--partition", &fixture("single6.json")]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["output"]["modularity"]["modularity"].as_f64(), Some(0.0));
}

#[test]
fn usage_errors_exit_with_two() {
    let tri = fixture("triangles6.json");
    let conflict = obspart(&["place", "--system", &tri, "--sensors", "2", "--budgets", "1,1"]);
    assert_eq!(conflict.status.code(), Some(2));
    assert_eq!(error_json(&conflict)["error"]["kind"], "usage");

    let unknown = obspart(&["partition", "--system", &tri, "--kappa", "2", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert_eq!(error_json(&unknown)["error"]["kind"], "usage");

    let bad_metric = obspart(&["gramian", "--system", &tri, "--metric", "volume"]);
    assert_eq!(bad_metric.status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error() {
    let out = obspart(&["sysinfo", "--system", "/nonexistent/system.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "io");
}

#[test]
fn explicit_budgets_and_partition_files() {
    let out = obspart(&[
        "place", "--system", &fixture("triangles6.json"), "--partition", &fixture("halves6.json"),
        "--budgets", "2,0", "--metric", "trace",
    ]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let placement = &v["output"]["placement"];
    let selected: Vec<u64> = serde_json::from_value(placement["selected"].clone()).unwrap();
    assert_eq!(selected.len(), 2);
    assert!(selected.iter().all(|&s| s < 3));
    assert_eq!(placement["bound"]["holds"], true);
    assert_eq!(placement["subsystems"][1]["selected"], serde_json::json!([]));
}

#[test]
fn sweep_writes_one_csv_row_per_kappa() {
    let csv = scratch("sweep.csv");
    let out = obspart(&[
        "sweep-kappa", "--system", &fixture("triangles6.json"), "--from", "3", "--to", "6",
        "--emit-csv", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("kappa,solver_total,solver_modularity,spectral_total"));
    let kappas: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kappas, ["3", "4", "5", "6"]);
}

#[test]
fn kalman_check_reads_placement_reports() {
    let placement = scratch("placement.json");
    let out = obspart(&[
        "place", "--system", &fixture("triangles6.json"), "--sensors", "2", "--out", placement.to_str().unwrap(),
    ]);
    assert!(out.status.success() && out.stdout.is_empty());
    let csv = scratch("kf.csv");
    let out = obspart(&[
        "verify-kf", "--system", &fixture("triangles6.json"), "--sensors-file", placement.to_str().unwrap(),
        "--trials", "4", "--horizon", "100", "--emit-csv", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let placed: Value = serde_json::from_str(&fs::read_to_string(&placement).unwrap()).unwrap();
    assert_eq!(v["output"]["kalman"]["sensors"], placed["output"]["placement"]["selected"]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 5);
}

#[test]
fn thread_count_from_environment_does_not_change_reports() {
    let args = ["partition", "--system", &fixture("triangles6.json"), "--kappa", "2", "--solver", "continuous", "--seed", "4"];
    let base = obspart(&args).stdout;
    let env = Command::new(env!("CARGO_BIN_EXE_obspart"))
        .args(args)
        .env("OBSPART_THREADS", "3")
        .output()
        .unwrap();
    assert!(env.status.success());
    assert_eq!(base, env.stdout);
}

#[test]
fn reports_round_trip_and_timing_is_opt_in() {
    let tri = fixture("triangles6.json");
    for args in [
        vec!["sysinfo", "--system", &tri],
        vec!["gramian", "--system", &tri, "--select", "0,4", "--epsilon", "0"],
        vec!["oracle", "check", "--system", &tri, "--objective", "extended"],
        vec!["oracle", "partition", "--system", &tri, "--kappa", "2", "--metric", "rank"],
        vec!["baseline-spectral", "--system", &tri, "--kappa", "2"],
    ] {
        let out = obspart(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
        assert!(report.timing.is_none());
        assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", String::from_utf8(out.stdout).unwrap());
    }
    let timed = obspart(&["sysinfo", "--system", &tri, "--timing"]);
    let report: RunReport = serde_json::from_slice(&timed.stdout).unwrap();
    assert!(report.timing.is_some());
}

#[test]
fn oracle_check_finds_no_violations_on_fixture() {
    let out = obspart(&["oracle", "check", "--system", &fixture("chain5.json"), "--metric", "logdet"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["output"]["check"]["violations"], 0);
    assert_eq!(v["output"]["check"]["ground_size"], 5);
}
