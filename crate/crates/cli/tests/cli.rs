//! End-to-end checks of the `mcm` binary: artifacts, determinism, and
//! exit codes.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

fn mcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn uniform_normalizes_to_exactly_one() {
    let out = mcm(&["optimize", "--task", "gemm-chain-2", "--optimizer", "uniform"]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows[0][3], "optimizer");
    assert_eq!(rows[1][3], "uniform");
    let idx = rows[0].iter().position(|h| h == "normalized_vs_baseline").unwrap();
    assert_eq!(rows[1][idx], "1.0");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = ["optimize", "--task", "gemm-chain-2", "--optimizer", "ga", "--seed", "7"];
    let first = mcm(&args);
    let second = mcm(&args);
    assert_eq!(stdout(&first), stdout(&second));
    assert!(!first.stdout.is_empty());
}

#[test]
fn every_row_keeps_the_edp_identity() {
    let out = mcm(&["optimize", "--task", "gemm-chain-4", "--seed", "3"]);
    let rows = csv_rows(&stdout(&out));
    let lat = rows[0].iter().position(|h| h == "latency_s").unwrap();
    let energy = rows[0].iter().position(|h| h == "energy_J").unwrap();
    let edp = rows[0].iter().position(|h| h == "edp").unwrap();
    assert!(rows.len() > 3);
    for row in &rows[1..] {
        let l: f64 = row[lat].parse().unwrap();
        let e: f64 = row[energy].parse().unwrap();
        let p: f64 = row[edp].parse().unwrap();
        assert!((p - l * e).abs() <= 1e-12 * p.abs(), "edp drifts in {row:?}");
    }
}

#[test]
fn sweep_emits_sixteen_rows_per_optimizer() {
    let out = mcm(&[
        "sweep",
        "--task",
        "gemm-chain-4",
        "--optimizer",
        "uniform,simba",
        "--seed",
        "1",
    ]);
    let rows = csv_rows(&stdout(&out));
    let idx = rows[0].iter().position(|h| h == "optimizer").unwrap();
    for name in ["uniform", "simba"] {
        let count = rows[1..].iter().filter(|r| r[idx] == name).count();
        assert_eq!(count, 16, "{name} rows");
    }
}

#[test]
fn config_errors_exit_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[grid]\nx = \"wide\"\n").unwrap();
    let out = mcm(&["optimize", "--task", "gemm-chain-2", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "no position in: {err}");
}

#[test]
fn strict_timeout_exits_two() {
    let out = mcm(&[
        "optimize",
        "--task",
        "gemm-chain-2",
        "--optimizer",
        "miqp",
        "--time-limit",
        "0",
        "--strict",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Without --strict the same run succeeds and still writes its rows.
    let out = mcm(&[
        "optimize",
        "--task",
        "gemm-chain-2",
        "--optimizer",
        "miqp",
        "--time-limit",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(csv_rows(&stdout(&out)).len(), 2);
}

#[test]
fn simulate_writes_a_bounded_heatmap() {
    let out = mcm(&["simulate", "--scenario", "dram", "--nop-gbps", "60"]);
    let text = stdout(&out);
    let rows = csv_rows(&text);
    assert_eq!(rows[0], ["row", "col", "direction", "utilization"]);
    assert!(rows.len() > 10);
    for row in &rows[1..] {
        let util: f64 = row[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&util), "utilization {util}");
    }
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("completion_s"), "{err}");
}

#[test]
fn pipeline_schedule_is_well_formed() {
    let out = mcm(&["pipeline", "--task", "gemm-chain-2", "--batch", "2", "--method", "exact"]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows[0], ["task", "resource", "start", "end"]);
    assert_eq!(rows.len() - 1, 2 * 2 * 3, "three tasks per op per sample");
    for row in &rows[1..] {
        assert!(row[1] == "comm" || row[1] == "compute", "resource {}", row[1]);
        let start: f64 = row[2].parse().unwrap();
        let end: f64 = row[3].parse().unwrap();
        assert!(end >= start);
    }
}

#[test]
fn model_reports_the_cost_breakdown_as_json() {
    let out = mcm(&["model", "--task", "gemm-chain-2"]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(value["optimizer"], "uniform");
    let b = &value["breakdown"];
    let lat = b["latency_s"].as_f64().unwrap();
    let energy = b["energy_j"].as_f64().unwrap();
    let edp = b["edp_js"].as_f64().unwrap();
    assert!(lat > 0.0 && energy > 0.0);
    assert!((edp - lat * energy).abs() <= 1e-12 * edp);
    assert_eq!(value["partitions"].as_array().unwrap().len(), 2);
}

#[test]
fn workload_files_and_configs_combine() {
    let dir = tempfile::tempdir().unwrap();
    let workload = dir.path().join("two.toml");
    let mut f = std::fs::File::create(&workload).unwrap();
    writeln!(f, "[[op]]\nname = \"a\"\nm = 64\nk = 64\nn = 64\n").unwrap();
    writeln!(f, "[[op]]\nname = \"b\"\nm = 64\nk = 64\nn = 64\nchain_prev = true\n").unwrap();
    drop(f);
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        format!(
            "memory = \"hbm\"\nworkload = {:?}\n\n[grid]\nx = 2\ny = 2\ntype = \"B\"\n",
            workload.display()
        ),
    )
    .unwrap();
    let out = mcm(&["optimize", "--config", config.to_str().unwrap(), "--seed", "2"]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows[1][0], "two");
    assert_eq!(rows[1][1], "2x2");
    assert_eq!(rows[1][2], "B");
}

#[test]
fn output_files_land_in_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        format!("output_dir = {:?}\n", dir.path().join("artifacts").display()),
    )
    .unwrap();
    let out = mcm(&[
        "optimize",
        "--task",
        "gemm-chain-2",
        "--optimizer",
        "uniform",
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let written = dir.path().join("artifacts").join("optimize.csv");
    assert!(Path::new(&written).exists());
    let text = std::fs::read_to_string(written).unwrap();
    assert!(text.starts_with("workload,"));
}

#[test]
fn lp_export_writes_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("model.lp");
    let out = mcm(&[
        "optimize",
        "--task",
        "gemm-chain-2",
        "--optimizer",
        "uniform",
        "--lp-export",
        lp.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(lp).unwrap();
    assert!(text.contains("Minimize"), "{}", &text[..text.len().min(200)]);
    assert!(text.contains("Subject To"));
}
