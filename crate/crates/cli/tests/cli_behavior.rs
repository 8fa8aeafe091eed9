//! End-to-end checks of the binary: exit codes, error wording, output
//! files, and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csma-sleep"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn summary(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 1, "edges": []}, "lambdas": 0.2}"#,
    );
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("config error"), "{msg}");
    assert!(msg.contains("lambdas"), "{msg}");
}

#[test]
fn missing_graph_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"lambda": 0.2}"#);
    let out = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("graph"), "{}", stderr(&out));
}

#[test]
fn omega_and_awake_target_are_mutually_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 1, "edges": []}, "lambda": 0.2, "omega": 0.1, "awake_target": 0.5}"#,
    );
    let out = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("omega") && msg.contains("awake_target"), "{msg}");
}

#[test]
fn declared_mode_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"mode": "optimize", "graph": {"links": 1, "edges": []}, "r": 0.0, "rho": 0.0}"#,
    );
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("optimize") && msg.contains("analyze"), "{msg}");
}

#[test]
fn unknown_graph_keyword_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 3, "edges": "ring"}, "r": 0.0, "rho": 0.0}"#,
    );
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("graph.edges"), "{}", stderr(&out));
}

#[test]
fn per_link_length_mismatch_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 2, "edges": [[0, 1]]}, "lambda": [0.2, 0.2, 0.2], "omega": 0.1}"#,
    );
    let out = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("lambda") && msg.contains("expected 2"), "{msg}");
}

#[test]
fn analyze_reports_the_uniform_law_at_zero_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 2, "edges": [[0, 1]]}, "r": 0.0, "rho": 0.0}"#,
    );
    let out = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    let analysis = &doc["analysis"];
    assert_eq!(analysis["state_count"], 8);
    let states = analysis["states"].as_array().unwrap();
    assert_eq!(states.len(), 8);
    for state in states {
        let p = state["probability"].as_f64().unwrap();
        assert!((p - 0.125).abs() < 1e-12);
    }
    assert!(analysis["detailed_balance_residual"].as_f64().unwrap() < 1e-12);
    // log of the 8-state normalizer
    let log_partition = analysis["log_partition"].as_f64().unwrap();
    assert!((log_partition - (8.0f64).ln()).abs() < 1e-12);
}

#[test]
fn optimize_finds_the_single_link_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 1, "edges": []}, "lambda": 0.5, "awake_target": 0.75}"#,
    );
    let out = run(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    assert_eq!(doc["status"], "converged");
    let opt = &doc["optimization"];
    let r = opt["r_star"][0].as_f64().unwrap();
    let rho = opt["rho_star"][0].as_f64().unwrap();
    assert!((r - std::f64::consts::LN_2).abs() < 1e-3, "r* = {r}");
    assert!(rho.abs() < 1e-3, "rho* = {rho}");
}

#[test]
fn region_traces_the_interfering_pair_boundary_and_awake_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 2, "edges": [[0, 1]]}, "lambda": [0.3, 0.3], "region": {"samples": 9}}"#,
    );
    let out = run(&[
        "region",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("region.csv")).unwrap();
    let mut boundary = 0;
    let mut box_rows = Vec::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            // For one interfering pair the capacity region is x + y < 1.
            "capacity_boundary" => {
                let x: f64 = fields[1].parse().unwrap();
                let y: f64 = fields[2].parse().unwrap();
                assert!((x + y - 1.0).abs() < 1e-6, "({x}, {y})");
                boundary += 1;
            }
            "awake_box" => {
                let x: f64 = fields[1].parse().unwrap();
                let y: f64 = fields[2].parse().unwrap();
                box_rows.push((x, y));
            }
            "offered_load" => {
                assert_eq!((fields[1], fields[2]), ("0.3", "0.3"));
            }
            other => panic!("unexpected row kind {other}"),
        }
    }
    assert_eq!(boundary, 9);
    // Closed rectangle [0.3, 1]^2: corners visited, loop closed.
    assert_eq!(box_rows.len(), 5);
    assert_eq!(box_rows[0], box_rows[4]);
    assert!(box_rows.contains(&(1.0, 1.0)));
    assert!(box_rows.contains(&(1.0, 0.3)));
    assert!(box_rows.contains(&(0.3, 1.0)));
}

#[test]
fn region_of_independent_links_is_the_unit_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"links": 2, "edges": []}, "region": {"samples": 5}}"#,
    );
    let out = run(&[
        "region",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("region.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "capacity_boundary");
        let x: f64 = fields[1].parse().unwrap();
        let y: f64 = fields[2].parse().unwrap();
        // Independent links cap each coordinate at 1; rays leave through
        // the larger component's face.
        assert!((x.max(y) - 1.0).abs() < 1e-6, "({x}, {y})");
    }
}

#[test]
fn region_rejects_more_than_three_links() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"graph": {"links": 4, "edges": "complete"}}"#);
    let out = run(&["region", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("state space too large"), "{}", stderr(&out));
}

#[test]
fn compare_of_identical_schemes_reports_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 2, "edges": [[0, 1]]},
            "lambda": 0.2, "omega": 0.2,
            "duration_s": 5.0,
            "compare": {"schemes": ["adaptive_csma", "adaptive_csma"]}
        }"#,
    );
    let out = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    let delta = &doc["comparison"]["deltas_vs_first"][0];
    assert_eq!(delta["total_throughput"].as_f64().unwrap(), 0.0);
    assert_eq!(delta["mean_energy_per_packet_j"].as_f64().unwrap(), 0.0);
    assert_eq!(delta["collision_probability"].as_f64().unwrap(), 0.0);
}

#[test]
fn compare_requires_at_least_two_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 1, "edges": []},
            "lambda": 0.2, "omega": 0.2,
            "compare": {"schemes": ["proposed"]}
        }"#,
    );
    let out = run(&["compare", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("compare.schemes"), "{}", stderr(&out));
}

#[test]
fn dcf_sweep_reports_every_window_and_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 2, "edges": [[0, 1]]},
            "duration_s": 5.0,
            "slotted": {"cw0_sweep": [16, 64]}
        }"#,
    );
    let out = run(&[
        "dcf",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    let sweep = doc["dcf"]["sweep"].as_array().unwrap();
    assert_eq!(sweep.len(), 2);
    let best = doc["dcf"]["best_cw0"].as_u64().unwrap();
    assert!(best == 16 || best == 64);
    let best_tput = doc["dcf"]["best_per_link_throughput"].as_f64().unwrap();
    for row in sweep {
        assert!(row["per_link_throughput"].as_f64().unwrap() <= best_tput + 1e-12);
    }
    // No load given, so saturation has nothing to compare against.
    assert!(doc["dcf"]["queue_growth"].is_null());
}

#[test]
fn slotted_without_explicit_parameters_records_the_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 1, "edges": []},
            "lambda": 0.3, "omega": 0.3,
            "duration_s": 5.0,
            "sleep_mean_s": 0.05
        }"#,
    );
    let out = run(&[
        "slotted",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    assert_eq!(doc["optimization"]["status"], "converged");
    assert!(doc["run"]["s_hat"][0].as_f64().unwrap() > 0.0);
    assert!(doc["collisions"]["collision_probability"].as_f64().is_some());
}

#[test]
fn simulate_writes_timeseries_and_honors_the_trace_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 1, "edges": []},
            "lambda": 0.2, "omega": 0.2,
            "r": 0.0, "rho": 0.0,
            "duration_s": 2.0
        }"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--trace",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ts = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert!(ts.starts_with("frame,time_s,link,"));
    assert_eq!(ts.lines().count(), 2);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_s,link,event,queue_len"));
    assert!(trace.lines().count() > 10);
}

#[test]
fn adaptive_simulate_records_frames_and_tail_averages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 2, "edges": [[0, 1]]},
            "lambda": 0.2, "omega": 0.2,
            "duration_s": 10.0,
            "adaptation": {"record_every": 10}
        }"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    assert_eq!(doc["adaptation"]["frames_recorded"].as_u64().unwrap(), 100);
    assert!(doc["adaptation"]["tail_r"][0].as_f64().unwrap().is_finite());
    let ts = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    // header + 100 frames x 2 links
    assert_eq!(ts.lines().count(), 201);
}

#[test]
fn experiment_runs_without_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["experiment", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = summary(dir.path());
    assert_eq!(doc["mode"], "experiment");
    assert_eq!(doc["links"], 12);
    assert!(doc["adaptation"]["frames_recorded"].as_u64().unwrap() > 0);
    assert!(dir.path().join("timeseries.csv").exists());
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "graph": {"links": 1, "edges": []},
            "lambda": 0.2, "omega": 0.2,
            "r": 0.0, "rho": 0.0,
            "duration_s": 2.0
        }"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (out_dir, seed) in [(&out_a, "7"), (&out_b, "7"), (&out_c, "8")] {
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = fs::read(out_a.join("summary.json")).unwrap();
    let b = fs::read(out_b.join("summary.json")).unwrap();
    let c = fs::read(out_c.join("summary.json")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(summary(&out_a)["seed"].as_u64().unwrap(), 7);
}
