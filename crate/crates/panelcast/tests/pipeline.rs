//! End-to-end command tests: artifacts on disk, exit codes, the weekly
//! path, config-file precedence, and the what-if indicator policy.

use std::path::{Path, PathBuf};
use std::process::Command;

use panelcast::cli::{
    cmd_evaluate, cmd_fit, cmd_forecast, cmd_ingest, cmd_run_all, cmd_simulate, cmd_test, RunConfig,
};
use panelcast::ingest::Frequency;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_panelcast"))
}

fn simulated_triple(dir: &Path, seed: u64) -> RunConfig {
    let data_dir = dir.join("data");
    let cfg = RunConfig {
        out_dir: data_dir.clone(),
        sim_units: 6,
        sim_days: 130,
        seed,
        ..RunConfig::default()
    };
    cmd_simulate(&cfg).unwrap();
    RunConfig {
        attestations: Some(data_dir.join("attestations.csv")),
        census: Some(data_dir.join("census.csv")),
        zipmap: Some(data_dir.join("zipmap.csv")),
        ..RunConfig::default()
    }
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn run_all_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simulated_triple(dir.path(), 1001);
    cfg.out_dir = dir.path().join("out");
    cfg.k_max = 4;
    cfg.plot_data = true;
    cmd_run_all(&cfg).unwrap();

    for name in [
        "panel.csv",
        "fit.json",
        "fit_summary.txt",
        "granger.json",
        "granger_report.txt",
        "forecast.json",
        "forecast.csv",
        "plot_data.csv",
        "eval.json",
        "eval_table.txt",
        "run_summary.txt",
        "manifest.json",
    ] {
        assert!(cfg.out_dir.join(name).exists(), "missing artifact {name}");
    }

    let manifest = read(cfg.out_dir.join("manifest.json"));
    assert!(manifest.contains("\"schema_version\": 1"));
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("attestations.csv"));
    let fit = read(cfg.out_dir.join("fit.json"));
    assert!(fit.contains("bic_curve"));
    assert!(fit.contains("wald"));
    let forecast_csv = read(cfg.out_dir.join("forecast.csv"));
    assert!(forecast_csv.starts_with("unit_id,date,predicted_census"));
    assert!(forecast_csv.contains("network,"));
    let plot = read(cfg.out_dir.join("plot_data.csv"));
    assert!(plot.contains("observed"));
    assert!(plot.contains("fitted"));
    assert!(plot.contains("forecast"));
}

#[test]
fn staged_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simulated_triple(dir.path(), 1002);

    cfg.out_dir = dir.path().join("ingest");
    cmd_ingest(&cfg).unwrap();
    let panel_path = cfg.out_dir.join("panel.csv");

    cfg.panel = Some(panel_path);
    cfg.out_dir = dir.path().join("fit");
    cfg.k_max = 3;
    cmd_fit(&cfg).unwrap();
    assert!(cfg.out_dir.join("fit_summary.txt").exists());

    cfg.out_dir = dir.path().join("test");
    cmd_test(&cfg).unwrap();
    let report = read(cfg.out_dir.join("granger_report.txt"));
    assert!(report.contains("W-bar"));

    cfg.out_dir = dir.path().join("forecast");
    cfg.horizon = 5;
    cfg.lag_order = Some(2);
    cmd_forecast(&cfg).unwrap();
    let fs = read(cfg.out_dir.join("forecast.csv"));
    assert_eq!(fs.lines().count(), 1 + 7 * 5); // header + (6 units + network) x 5 steps

    cfg.out_dir = dir.path().join("eval");
    cfg.holdout_len = 6;
    cmd_evaluate(&cfg).unwrap();
    let table = read(cfg.out_dir.join("eval_table.txt"));
    assert!(table.contains("persistence"));
}

#[test]
fn weekly_test_path_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simulated_triple(dir.path(), 1003);
    // Longer sample so the weekly panel keeps enough periods.
    let data_dir = dir.path().join("data2");
    let sim = RunConfig {
        out_dir: data_dir.clone(),
        sim_units: 5,
        sim_days: 310,
        seed: 1003,
        ..RunConfig::default()
    };
    cmd_simulate(&sim).unwrap();
    cfg.attestations = Some(data_dir.join("attestations.csv"));
    cfg.census = Some(data_dir.join("census.csv"));
    cfg.zipmap = Some(data_dir.join("zipmap.csv"));

    cfg.out_dir = dir.path().join("ingest");
    cmd_ingest(&cfg).unwrap();
    cfg.panel = Some(cfg.out_dir.join("panel.csv"));

    cfg.out_dir = dir.path().join("weekly");
    cfg.frequency = Frequency::Weekly;
    cfg.lag_order = Some(1);
    cmd_test(&cfg).unwrap();
    let granger = read(cfg.out_dir.join("granger.json"));
    assert!(granger.contains("\"lag_order\": 1"));
    let report = read(cfg.out_dir.join("granger_report.txt"));
    assert!(report.contains("lag order K = 1"));
}

#[test]
fn rolling_evaluation_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simulated_triple(dir.path(), 1004);
    cfg.out_dir = dir.path().join("ingest");
    cmd_ingest(&cfg).unwrap();
    cfg.panel = Some(cfg.out_dir.join("panel.csv"));

    cfg.out_dir = dir.path().join("eval");
    cfg.rolling = true;
    cfg.holdout_len = 5;
    cfg.lag_order = Some(2);
    cmd_evaluate(&cfg).unwrap();
    let table = read(cfg.out_dir.join("eval_table.txt"));
    assert!(table.contains("rolling origin"));
}

#[test]
fn provided_exogenous_paths_change_forecasts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simulated_triple(dir.path(), 1005);
    cfg.out_dir = dir.path().join("ingest");
    cmd_ingest(&cfg).unwrap();
    cfg.panel = Some(cfg.out_dir.join("panel.csv"));
    cfg.lag_order = Some(1);
    cfg.horizon = 3;

    cfg.out_dir = dir.path().join("hold");
    cmd_forecast(&cfg).unwrap();
    let hold = read(cfg.out_dir.join("forecast.csv"));

    // What-if paths: a large indicator surge on the transformed scale.
    let exog_path = dir.path().join("exog.csv");
    let mut exog = String::from("unit_id,step,value\n");
    let panel = panelcast::ingest::PanelDataset::read_csv(cfg.panel.as_ref().unwrap()).unwrap();
    for unit in &panel.units {
        for step in 1..=3 {
            exog.push_str(&format!("{},{step},5.0\n", unit.id));
        }
    }
    std::fs::write(&exog_path, exog).unwrap();

    cfg.out_dir = dir.path().join("provided");
    cfg.exog_policy = panelcast::cli::ExogPolicyChoice::Provided;
    cfg.exog_csv = Some(exog_path);
    cmd_forecast(&cfg).unwrap();
    let provided = read(cfg.out_dir.join("forecast.csv"));
    assert_ne!(hold, provided, "what-if paths must alter the forecasts");
}

#[test]
fn binary_exit_codes_map_error_classes() {
    // Missing census file: data error, exit 3, path named on stderr.
    let dir = tempfile::tempdir().unwrap();
    let out = binary()
        .args([
            "run-all",
            "--attestations",
            "/nonexistent/a.csv",
            "--census",
            "/nonexistent/c.csv",
            "--zipmap",
            "/nonexistent/z.csv",
            "--out",
        ])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent"), "stderr: {stderr}");

    // Unknown config key: config error, exit 2.
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "no_such_key = 1\n").unwrap();
    let out = binary()
        .args(["fit", "--config"])
        .arg(&conf)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_simulate_then_run_all() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let status = binary()
        .args([
            "simulate", "--units", "5", "--days", "120", "--seed", "77", "--out",
        ])
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());

    let out_dir = dir.path().join("out");
    let status = binary()
        .arg("run-all")
        .arg("--attestations")
        .arg(data.join("attestations.csv"))
        .arg("--census")
        .arg(data.join("census.csv"))
        .arg("--zipmap")
        .arg(data.join("zipmap.csv"))
        .args(["--k-max", "3", "--holdout", "5", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("run_summary.txt").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let sim = RunConfig {
        out_dir: data.clone(),
        sim_units: 5,
        sim_days: 120,
        seed: 88,
        ..RunConfig::default()
    };
    cmd_simulate(&sim).unwrap();

    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "attestations = {}\ncensus = {}\nzipmap = {}\nk_max = 2\nholdout_len = 9\n",
            data.join("attestations.csv").display(),
            data.join("census.csv").display(),
            data.join("zipmap.csv").display(),
        ),
    )
    .unwrap();

    // Flag overrides holdout_len from the file (9 -> 5).
    let out_dir = dir.path().join("out");
    let status = binary()
        .args(["run-all", "--config"])
        .arg(&conf)
        .args(["--holdout", "5", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let eval = read(out_dir.join("eval.json"));
    assert!(eval.contains("\"horizon\": 5"), "eval: {eval}");
    let manifest = read(out_dir.join("manifest.json"));
    assert!(manifest.contains("\"holdout_len\": \"5\""));
}

#[test]
fn unmapped_zip_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulated_triple(dir.path(), 1006);
    // Corrupt one attestation zip.
    let att_path = cfg.attestations.clone().unwrap();
    let text = read(att_path.clone());
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen(&lines[1][11..16], "99999", 1);
    std::fs::write(&att_path, lines.join("\n") + "\n").unwrap();

    let mut strict = cfg.clone();
    strict.out_dir = dir.path().join("strict");
    let err = cmd_ingest(&strict).unwrap_err();
    assert!(err.to_string().contains("99999"), "err: {err}");

    let mut lenient = cfg;
    lenient.allow_unmapped = true;
    lenient.out_dir = dir.path().join("lenient");
    cmd_ingest(&lenient).unwrap();
    assert!(lenient.out_dir.join("panel.csv").exists());
}
