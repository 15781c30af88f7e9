use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use orlicz_flow::cli::Snapshot;

const ROUND: &str = r#"{
  "problem": {"lp_dual": {"p": 2, "q": 0}, "f": "1"},
  "grid": {"n": 2, "N": 256},
  "initial_body": "1 + 0.3*cos(t)"
}"#;

const ONES: &str = r#"{
  "problem": {"phi": "1", "g_radial": "1", "f": "1"},
  "grid": {"n": 2, "N": 64}
}"#;

fn with(base: &str, extra: &str) -> String {
    let cut = base.rfind('}').unwrap();
    format!("{}, {extra}}}", &base[..cut])
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_orlicz-flow"));
    cmd.current_dir(dir).arg(args[0]).arg(&cfg).args(&args[1..]);
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing in\n{report}"))
        .parse()
        .unwrap()
}

#[test]
fn single_step_run_exits_one_with_one_trace_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &with(ROUND, r#""flow": {"max_steps": 1}"#), &["run-flow"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "step,time,dt,J,residual_sup_rel,residual_l2_rel,min_h,max_h,max_grad_h,min_principal_radius,max_K"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
    assert!(stdout(&out).starts_with("status = max_steps\n"));
    assert!(dir.path().join("out/final.json").exists());
    assert!(dir.path().join("out/run.log").exists());
}

#[test]
fn config_errors_exit_four_and_are_logged() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &ROUND.replace(r#""f": "1""#, r#""f": "cos(t""#), &["run-flow"]);
    assert_eq!(out.status.code(), Some(4));
    let log = fs::read_to_string(dir.path().join("run.log")).unwrap();
    assert!(log.contains("problem.f:"), "{log}");

    let out = run(dir.path(), &ROUND.replace("256", "8"), &["check-condition"]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(dir.path(), ROUND, &["measure", "missing.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn measure_of_unit_ball_is_pi() {
    let dir = tempfile::tempdir().unwrap();
    let snap = Snapshot {
        n: 2,
        nodes: 64,
        time: 0.0,
        h: vec![1.0; 64],
    };
    snap.save(&dir.path().join("ball.json")).unwrap();
    let out = run(dir.path(), ONES, &["measure", "ball.json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: f64 = stdout(&out).trim().parse().unwrap();
    assert!((v - PI).abs() < 1e-12, "{v}");
    let out = run(dir.path(), ONES, &["measure", "ball.json", "--region", "arc:0,3.141592653589793"]);
    let v: f64 = stdout(&out).trim().parse().unwrap();
    assert!((v - PI / 2.0).abs() < 1e-12, "{v}");
    let out = run(dir.path(), ONES, &["measure", "ball.json", "--region", "arc:1"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn snapshot_round_trip_reproduces_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(ROUND, r#""flow": {"max_steps": 20}, "outputs": {"snapshot_every": 10}"#);
    let out = run(dir.path(), &cfg, &["run-flow"]);
    assert_eq!(out.status.code(), Some(1));
    for k in [0, 10, 20] {
        assert!(dir.path().join(format!("out/snapshot_{k}.json")).exists());
    }
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').nth(4).unwrap().parse().unwrap();
    let out = run(dir.path(), &cfg, &["residual", "out/final.json"]);
    assert_eq!(out.status.code(), Some(0));
    let again = value(&stdout(&out), "residual_sup_rel");
    assert!((again - last).abs() <= 1e-14, "{again} vs {last}");
}

#[test]
fn strict_mode_refuses_violated_condition() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), ONES, &["check-condition"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("verdict = violated\n"));
    let out = run(dir.path(), ONES, &["check-condition", "--strict"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), ONES, &["run-flow", "--strict"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out/trace.csv").exists());
}

#[test]
fn growing_round_body_runs_to_max_steps() {
    // h′ = h − 1 from h ≡ 3: the body keeps growing
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(ONES, r#""initial_body": "3", "flow": {"max_steps": 50}"#);
    let out = run(dir.path(), &cfg, &["run-flow"]);
    assert_eq!(out.status.code(), Some(1));
    let log = fs::read_to_string(dir.path().join("out/run.log")).unwrap();
    assert!(log.contains("WARN solvability condition violated"), "{log}");
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let max_h: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert_eq!(max_h.len(), 50);
    assert!(max_h.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn guard_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(
        ROUND,
        r#""flow": {"dt0": 10, "dt_min": 10, "max_steps": 5}"#,
    );
    let out = run(dir.path(), &cfg, &["run-flow"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).starts_with("status = guard_failure\n"));
    let log = fs::read_to_string(dir.path().join("out/run.log")).unwrap();
    assert!(log.contains("ERROR guard failure"), "{log}");
}

#[test]
fn newton_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), ROUND, &["solve-newton"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(value(&stdout(&out), "iterations") <= 10.0);
    let h = Snapshot::load(&dir.path().join("out/newton.json")).unwrap().h;
    assert!(h.iter().all(|v| (v - 1.0).abs() < 1e-10));

    let axisym = r#"{"problem": {"lp_dual": {"p": 2, "q": 0}, "f": "1"}, "grid": {"n": 3, "N": 32}}"#;
    let out = run(dir.path(), axisym, &["solve-newton"]);
    assert_eq!(out.status.code(), Some(4));
}
