//! End-to-end checks of the `flowsolve` binary: exit codes, CSV schema,
//! output files, and parallelism-independent determinism.

use std::path::Path;
use std::process::Command;

use flowsolve::cli::{self, ExperimentConfig, RunOptions, CSV_HEADER};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_flowsolve")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const MIXTURE_SWEEP: &str = r#"{
    "field": {"kind": "gaussian_mixture", "weights": [0.5, 0.5],
              "means": [[1.2, 0.8], [-1.0, -0.5]], "std": 0.4},
    "solvers": [{"method": "euler"},
                {"method": "flow", "order": 2, "corrector": true}],
    "nfe": [7, 8, 9, 10],
    "trials": 64,
    "seed": 9
}"#;

#[test]
fn sweep_exits_zero_and_writes_schema_stable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", MIXTURE_SWEEP);
    let out = dir.path().join("results");
    let status = Command::new(bin())
        .args(["sweep", "--config", &config, "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    // 2 solvers x 4 budgets x 1 metric.
    assert_eq!(lines.clone().count(), 8);
    // Default run keeps elapsed_ms deterministic (zero).
    for line in lines {
        assert!(line.ends_with(",0"), "unexpected timing in: {line}");
    }
}

#[test]
fn sweep_rows_show_multistep_dominating_euler() {
    let cfg = ExperimentConfig::from_json(MIXTURE_SWEEP).unwrap();
    let rows = cli::run_sweep(&cfg, &RunOptions::default()).unwrap().rows;
    for nfe in [7usize, 8, 9, 10] {
        let value = |solver: &str| {
            rows.iter()
                .find(|r| r.solver == solver && r.nfe == nfe)
                .map(|r| r.value)
                .unwrap()
        };
        assert!(
            value("flow") < value("euler"),
            "flow should beat euler at nfe={nfe}"
        );
    }
}

#[test]
fn malformed_config_exits_two_with_line_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.json", "{\n  \"field\": oops\n}");
    let output = Command::new(bin())
        .args(["sweep", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line"), "stderr: {stderr}");
}

#[test]
fn zero_trials_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "cfg.json",
        r#"{
            "field": {"kind": "poly_time", "coeffs": [0.0, 1.0]},
            "solvers": [{"method": "euler"}],
            "nfe": [4],
            "trials": 0,
            "seed": 1
        }"#,
    );
    let output = Command::new(bin())
        .args(["sweep", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_config_exits_two() {
    let output = Command::new(bin())
        .args(["sweep", "--config", "/nonexistent/cfg.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

fn encode_grid(header: &str, payload: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"FLOWGRID");
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Constant-velocity 1D grid covering x in [-8, 8], t in [0, 1].
fn constant_grid_bytes(v: f32) -> Vec<u8> {
    let header = r#"{"dim":1,"x_min":[-8.0],"x_max":[8.0],"x_points":[2],"t_min":0.0,"t_max":1.0,"t_points":2}"#;
    encode_grid(header, &[v; 4])
}

#[test]
fn grid_field_sweep_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("field.grid");
    std::fs::write(&grid_path, constant_grid_bytes(0.5)).unwrap();
    let config = write_config(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{
                "field": {{"kind": "grid", "path": "{}"}},
                "solvers": [{{"method": "euler"}}, {{"method": "heun"}}],
                "nfe": [4, 8],
                "trials": 3,
                "seed": 2
            }}"#,
            grid_path.to_str().unwrap()
        ),
    );
    let out = dir.path().join("results");
    let status = Command::new(bin())
        .args(["sweep", "--config", &config, "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    // Constant field: every solver is exact, so errors sit at rounding level.
    for line in csv.lines().skip(1) {
        let value: f64 = line.split(',').nth(7).unwrap().parse().unwrap();
        assert!(value < 1e-10, "suspicious error for constant field: {line}");
    }
}

#[test]
fn out_of_range_grid_cells_fail_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("narrow.grid");
    let header = r#"{"dim":1,"x_min":[-0.001],"x_max":[0.001],"x_points":[2],"t_min":0.0,"t_max":1.0,"t_points":2}"#;
    std::fs::write(&grid_path, encode_grid(header, &[0.0; 4])).unwrap();
    let config = write_config(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{
                "field": {{"kind": "grid", "path": "{}"}},
                "solvers": [{{"method": "euler"}}],
                "nfe": [4],
                "trials": 2,
                "seed": 3
            }}"#,
            grid_path.to_str().unwrap()
        ),
    );
    let out = dir.path().join("results");
    let output = Command::new(bin())
        .args(["sweep", "--config", &config, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    // Initial noise lies outside the +-0.001 grid: cells fail, run continues.
    assert_eq!(output.status.code(), Some(3));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains("NaN"), "failed cell should carry NaN: {row}");
}

#[test]
fn converge_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "cfg.json",
        r#"{
            "field": {"kind": "affine", "matrix": [[-0.6, 1.1], [-0.9, -0.2]],
                      "offset": [0.4, -0.3]},
            "solvers": [{"method": "euler"}, {"method": "heun"}],
            "nfe": [10, 20, 40, 80],
            "trials": 2,
            "seed": 4
        }"#,
    );
    let out = dir.path().join("results");
    let output = Command::new(bin())
        .args(["converge", "--config", &config, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("slope"), "stdout: {stdout}");
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert!(csv.contains("conv_slope"));
    let svg = std::fs::read_to_string(out.join("convergence.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn plot_renders_series_from_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", MIXTURE_SWEEP);
    let out = dir.path().join("results");
    assert!(Command::new(bin())
        .args(["sweep", "--config", &config, "--out", out.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let svg_path = dir.path().join("plot.svg");
    let status = Command::new(bin())
        .args([
            "plot",
            "--csv",
            out.join("sweep.csv").to_str().unwrap(),
            "--out",
            svg_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2); // euler + flow
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", MIXTURE_SWEEP);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(bin())
            .args(["sweep", "--config", &config, "--out", out.to_str().unwrap()])
            .env("FLOWSOLVE_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_and_nfe_overrides_change_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", MIXTURE_SWEEP);
    let out = dir.path().join("results");
    let status = Command::new(bin())
        .args([
            "sweep",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "77",
            "--nfe",
            "5,6",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4); // 2 solvers x 2 budgets
    assert!(csv.contains(",5,"));
    assert!(!csv.contains(",9,"));
}
