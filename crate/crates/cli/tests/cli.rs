//! End-to-end behavior of the compiled binary: output shapes, degenerate
//! inputs, configuration layering, and the documented exit classes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn lobcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobcast"))
        .args(args)
        .env_remove("LOBCAST_CONFIG")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = lobcast(args);
    assert!(
        out.status.success(),
        "lobcast {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_data(dir: &Path, seed: u64) -> PathBuf {
    let data_dir = dir.join("data");
    run_ok(&[
        "synth",
        "--duration-secs",
        "4200",
        "--seed",
        &seed.to_string(),
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    data_dir.join("lob.csv")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn backtest_naive_reports_accuracy_in_unit_interval() {
    let dir = scratch("bt-naive");
    let data = synth_data(&dir, 9);
    let out_dir = dir.join("out");
    run_ok(&[
        "backtest",
        "--data",
        data.to_str().unwrap(),
        "--t0",
        "3500",
        "--predictor",
        "naive",
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let result = read_json(&out_dir.join("result.json"));
    let accuracy = result["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy), "accuracy {accuracy}");
    assert_eq!(result["predictor"], "naive");
    assert!(!result["records"].as_array().unwrap().is_empty());
    let profit = fs::read_to_string(out_dir.join("profit_series.csv")).unwrap();
    assert!(profit.starts_with("time,cumulative_profit\n"));
}

#[test]
fn invalid_window_fails_validation_without_outputs() {
    let dir = scratch("bt-invalid-window");
    let data = synth_data(&dir, 10);
    let out_dir = dir.join("out");
    // Anchor past the data end: the sim span holds no events.
    let out = lobcast(&[
        "backtest",
        "--data",
        data.to_str().unwrap(),
        "--t0",
        "90000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists(), "failed run must not create output files");
}

#[test]
fn return_model_fit_failure_exits_with_fit_code() {
    let dir = scratch("bt-fit-failure");
    let data = synth_data(&dir, 11);
    // A return-model window of 6 seconds sits entirely inside the filter
    // transient that the identification discards, leaving it no samples.
    let cfg = dir.join("run.cfg");
    fs::write(
        &cfg,
        "hawkes_train_mins = 5\ncoe_train_mins = 0.1\nwarm_up_mins = 0.5\nsim_mins = 1\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = lobcast(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--t0",
        "3400",
        "--predictor",
        "naive",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(3), "stderr: {stderr}");
    assert!(stderr.contains("coe-fit"), "stderr: {stderr}");
    assert!(!out_dir.exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = scratch("usage");
    let data = synth_data(&dir, 12);
    let bad_predictor = lobcast(&[
        "backtest",
        "--data",
        data.to_str().unwrap(),
        "--predictor",
        "lstm",
    ]);
    assert_eq!(bad_predictor.status.code(), Some(1));
    let bad_flag = lobcast(&["analyze", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    let missing = lobcast(&["analyze", "--data", "/no/such/file.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn empty_tuning_grid_is_usage_error() {
    let dir = scratch("tune-empty");
    let data = synth_data(&dir, 13);
    let grid = dir.join("grid.csv");
    fs::write(
        &grid,
        "hawkes_train_mins,coe_train_mins,warm_up_mins,delta_t_secs,sim_mins,depth\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = lobcast(&[
        "tune",
        "--data",
        data.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn duplicate_grid_rows_deduplicate_with_warning() {
    let dir = scratch("tune-dup");
    let data = synth_data(&dir, 14);
    let grid = dir.join("grid.csv");
    fs::write(
        &grid,
        "hawkes_train_mins,coe_train_mins,warm_up_mins,delta_t_secs,sim_mins,depth\n\
         20,50,2.5,5,2,8\n\
         10,50,2.5,5,2,8\n\
         20,50,2.5,5,2,8\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = run_ok(&[
        "tune",
        "--data",
        data.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--t0",
        "3400",
        "--seed",
        "14",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicates"));

    // Three grid rows, one a duplicate: two evaluated rows remain.
    let tuning = fs::read_to_string(out_dir.join("tuning.csv")).unwrap();
    let rows: Vec<&str> = tuning.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);

    // best.json holds the row of minimal mean absolute error.
    let best = read_json(&out_dir.join("best.json"));
    let best_err = best["mean_abs_error"].as_f64().unwrap();
    let errors: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert!(
        errors.iter().all(|&e| best_err <= e),
        "best {best_err} vs rows {errors:?}"
    );
    let idx = best["index"].as_u64().unwrap() as usize;
    assert_eq!(errors[idx], best_err);
}

#[test]
fn singleton_grid_is_its_own_best() {
    let dir = scratch("tune-single");
    let data = synth_data(&dir, 15);
    let grid = dir.join("grid.csv");
    fs::write(
        &grid,
        "hawkes_train_mins,coe_train_mins,warm_up_mins,delta_t_secs,sim_mins,depth\n\
         15,50,2.5,5,2,8\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(&[
        "tune",
        "--data",
        data.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--t0",
        "3400",
        "--seed",
        "15",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let best = read_json(&out_dir.join("best.json"));
    assert_eq!(best["index"], 0);
    assert_eq!(best["hp"]["hawkes_train_mins"], 15.0);
}

#[test]
fn constant_price_data_skips_deciles_with_notice() {
    let dir = scratch("analyze-constant");
    let data = dir.join("flat.csv");
    fs::write(
        &data,
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n\
         0.0,100.1,5,100.0,4\n\
         1.0,100.1,5,100.0,4\n\
         2.0,100.1,6,100.0,3\n\
         3.0,100.1,5,100.0,4\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(&[
        "analyze",
        "--data",
        data.to_str().unwrap(),
        "--levels",
        "1",
        "--depth",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["zero_return_fraction"], 1.0);
    assert!(summary["correlation"].is_null());
    assert!(summary["notice"].as_str().unwrap().contains("skipped"));
    assert!(!out_dir.join("deciles.csv").exists());
    assert!(out_dir.join("ohlc.csv").exists());
}

#[test]
fn two_day_dataset_yields_two_ohlc_rows() {
    let dir = scratch("analyze-two-day");
    let data = dir.join("two_day.csv");
    fs::write(
        &data,
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n\
         100.0,100.1,5,100.0,4\n\
         200.0,100.2,5,100.1,4\n\
         300.0,100.1,5,100.0,4\n\
         86500.0,100.3,5,100.2,4\n\
         86600.0,100.2,5,100.1,4\n\
         86700.0,100.4,5,100.3,4\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(&[
        "analyze",
        "--data",
        data.to_str().unwrap(),
        "--levels",
        "1",
        "--depth",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let ohlc = fs::read_to_string(out_dir.join("ohlc.csv")).unwrap();
    let rows: Vec<&str> = ohlc.lines().collect();
    assert_eq!(rows[0], "date,open,high,low,close,snapshots");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1970-01-01,"));
    assert!(rows[2].starts_with("1970-01-02,"));
}

#[test]
fn montecarlo_emits_expected_shapes() {
    let dir = scratch("mc-shape");
    let data = synth_data(&dir, 16);
    let out_dir = dir.join("out");
    run_ok(&[
        "montecarlo",
        "--data",
        data.to_str().unwrap(),
        "--scenarios",
        "2",
        "--seed",
        "16",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let aggregate = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    let rows: Vec<&str> = aggregate.lines().skip(1).collect();
    assert_eq!(rows.len(), 8, "2 scenarios x 4 predictors");
    for name in ["oracle", "naive", "ma", "hawkes"] {
        let count = rows.iter().filter(|r| r.contains(name)).count();
        assert_eq!(count, 2, "{name} rows");
    }
    let boxstats = fs::read_to_string(out_dir.join("boxstats.csv")).unwrap();
    let rows: Vec<&str> = boxstats.lines().collect();
    assert_eq!(rows[0], "predictor,metric,min,q1,median,q3,max");
    assert_eq!(rows.len(), 1 + 8, "4 predictors x 2 metrics");
}

#[test]
fn ingest_normalizes_and_reports_dropped_rows() {
    let dir = scratch("ingest-report");
    let data = dir.join("raw.csv");
    fs::write(
        &data,
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n\
         0.0,100.1,5,100.0,4\n\
         1.0,99.9,5,100.0,4\n\
         2.0,100.2,5,100.1,4\n\
         2.0,100.3,5,100.2,4\n\
         3.0,100.1,5,100.0,4\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(&[
        "ingest",
        "--data",
        data.to_str().unwrap(),
        "--levels",
        "1",
        "--depth",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let report = read_json(&out_dir.join("ingest.json"));
    assert_eq!(report["rows_read"], 5);
    assert_eq!(report["crossed_dropped"], 1);
    assert_eq!(report["duplicates_collapsed"], 1);
    assert_eq!(report["snapshots"], 3);

    // The normalized file re-ingests without further corrections.
    let again = dir.join("again");
    run_ok(&[
        "ingest",
        "--data",
        out_dir.join("snapshots.csv").to_str().unwrap(),
        "--levels",
        "1",
        "--depth",
        "1",
        "--out",
        again.to_str().unwrap(),
    ]);
    let report = read_json(&again.join("ingest.json"));
    assert_eq!(report["crossed_dropped"], 0);
    assert_eq!(report["duplicates_collapsed"], 0);
    assert_eq!(report["snapshots"], 3);
}

#[test]
fn flags_override_config_file_and_env_var_names_default() {
    let dir = scratch("config-layers");
    let data = synth_data(&dir, 17);
    let cfg = dir.join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "data = {}\nseed = 1\nout = {}\n",
            data.display(),
            dir.join("out-file").display()
        ),
    )
    .unwrap();

    // Flag beats the file entry.
    run_ok(&[
        "fit-hawkes",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        dir.join("out-flag").to_str().unwrap(),
    ]);
    let fit = read_json(&dir.join("out-flag").join("hawkes.json"));
    assert_eq!(fit["seed"], 5);

    // Without --config the env var supplies the file.
    let out = Command::new(env!("CARGO_BIN_EXE_lobcast"))
        .args(["fit-hawkes"])
        .env("LOBCAST_CONFIG", &cfg)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit = read_json(&dir.join("out-file").join("hawkes.json"));
    assert_eq!(fit["seed"], 1);
}

#[test]
fn forecast_predictions_stay_inside_the_window() {
    let dir = scratch("forecast-window");
    let data = synth_data(&dir, 18);
    let out_dir = dir.join("out");
    run_ok(&[
        "forecast",
        "--data",
        data.to_str().unwrap(),
        "--t0",
        "3400",
        "--seed",
        "18",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let issued: f64 = parts.next().unwrap().parse().unwrap();
        let predicted: f64 = parts.next().unwrap().parse().unwrap();
        assert!((3400.0..3520.0).contains(&issued));
        // Default forecast window of 5 s, floored at the 1 s event clock.
        assert!(predicted > issued && predicted <= issued + 5.0 + 1.0);
        rows += 1;
    }
    assert!(rows > 0);
}
