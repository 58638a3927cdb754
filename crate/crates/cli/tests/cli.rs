use std::process::{Command, Output};
use timebin_qkd_cli::report::{parse_csv, CSV_HEADER};

fn tbqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn run_prints_reference_points() {
    let out = tbqkd(&["run"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = parse_csv(&out.stdout).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.skr_bps > 0.0));
}

#[test]
fn output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, "block_size = 100000\n").unwrap();
    let args = [
        "run",
        config.to_str().unwrap(),
        "--monte-carlo",
        "--seed",
        "4",
        "--format",
        "json",
    ];
    let a = tbqkd(&args);
    let b = tbqkd(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 8);
}

#[test]
fn writes_to_file_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let out = tbqkd(&["run", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let bytes = std::fs::read(&path).unwrap();
    let rows = parse_csv(&bytes).unwrap();
    let again = tbqkd(&["run"]);
    assert_eq!(parse_csv(&again.stdout).unwrap(), rows);
}

#[test]
fn unwritable_output_fails() {
    let out = tbqkd(&["run", "--out", "/nonexistent-dir/report.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot write"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "seed = 1\n\n[[points]]\nprotocol = \"2D\"\nloss_db = -3\n",
    )
    .unwrap();
    let out = tbqkd(&["run", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn sweep_and_compare() {
    let out = tbqkd(&[
        "sweep",
        "--from-db",
        "10",
        "--to-db",
        "12",
        "--step-db",
        "1",
        "--protocol",
        "4D",
    ]);
    assert!(out.status.success());
    let rows = parse_csv(&out.stdout).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.loss_db).collect::<Vec<_>>(),
        [10.0, 11.0, 12.0]
    );

    let out = tbqkd(&["compare", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[..2]
        .iter()
        .all(|r| r["enhancement"].as_f64().unwrap() > 1.0));
}

#[test]
fn calibrate_reports_each_protocol() {
    let out = tbqkd(&["calibrate", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let fits = v.as_array().unwrap();
    assert_eq!(fits.len(), 2);
    let adequate = fits.iter().all(|f| f["adequate"].as_bool().unwrap());
    assert_eq!(out.status.success(), adequate);
}

#[test]
fn calibrate_accepts_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("targets.csv");
    let run = tbqkd(&["run", "--out", path.to_str().unwrap()]);
    assert!(run.status.success());
    let out = tbqkd(&[
        "calibrate",
        "--targets",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}
