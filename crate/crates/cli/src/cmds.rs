//! The eight subcommands. Each loads what it needs through `RunConfig`,
//! calls into the library, and only then creates output files, so a failed
//! run leaves nothing behind.

use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use lobcast::backtest::{
    benchmark_forecast, monte_carlo, run_scenario, sample_scenarios, tune_hyperparameters,
    HyperParams,
};
use lobcast::coe::{CoeParams, SrivcConfig};
use lobcast::hawkes::{fit_mle, rolling_forecast, FitConfig, ForecastConfig, HawkesParams};
use lobcast::lobdata::{
    decile_correlation, extract_events, parse_lob_csv, write_lob_csv, EventSeries, IngestReport,
    LobSnapshot, Span,
};
use lobcast::predictors::PredictorKind;
use lobcast::synth::{generate, BiConfig, ReturnModel, SynthConfig, TimingModel};

use crate::config::RunConfig;
use crate::out::{atomic_via, num, write_json, Cell, Table};
use crate::{CliError, ReturnsArg, SynthArgs, TimingArg};

fn load_snapshots(rc: &RunConfig) -> Result<(Vec<LobSnapshot>, IngestReport), CliError> {
    let path = rc.require_data()?;
    Ok(parse_lob_csv(path, rc.levels)?)
}

fn load_events(rc: &RunConfig) -> Result<EventSeries, CliError> {
    let (snaps, _) = load_snapshots(rc)?;
    Ok(extract_events(&snaps, rc.depth)?)
}

fn ensure_out(rc: &RunConfig) -> Result<(), CliError> {
    Ok(fs::create_dir_all(&rc.out)?)
}

/// The explicit anchor, or the first validated one the scenario sampler
/// finds with the run's seed.
fn pick_t0(rc: &RunConfig, series: &EventSeries) -> Result<f64, CliError> {
    if let Some(t0) = rc.t0 {
        return Ok(t0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let anchors = sample_scenarios(series, 1, &rc.hp, &rc.settings, &mut rng)?;
    let t0 = *anchors.first().ok_or_else(|| {
        CliError::Core(lobcast::Error::Domain(
            "no scenario anchor in the data span passes validation; pass --t0 explicitly".into(),
        ))
    })?;
    eprintln!("t0 not given; selected {}", num(t0));
    Ok(t0)
}

pub fn ingest(rc: &RunConfig) -> Result<(), CliError> {
    let (snaps, report) = load_snapshots(rc)?;
    ensure_out(rc)?;
    let csv_path = rc.out.join("snapshots.csv");
    atomic_via(&csv_path, |tmp| write_lob_csv(tmp, &snaps))?;
    write_json(
        &rc.out.join("ingest.json"),
        &json!({
            "rows_read": report.rows_read,
            "snapshots": report.snapshots,
            "crossed_dropped": report.crossed_dropped,
            "duplicates_collapsed": report.duplicates_collapsed,
            "levels": rc.levels,
        }),
    )?;
    println!(
        "ingest: {} rows -> {} snapshots ({} crossed dropped, {} duplicate timestamps collapsed)",
        report.rows_read, report.snapshots, report.crossed_dropped, report.duplicates_collapsed
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}

pub fn analyze(rc: &RunConfig) -> Result<(), CliError> {
    let (snaps, _) = load_snapshots(rc)?;
    ensure_out(rc)?;

    // Fraction of consecutive snapshots whose mid-price did not move; the
    // event series keeps only the complement.
    let pairs = snaps.len().saturating_sub(1);
    let zero = snaps
        .windows(2)
        .filter(|w| w[1].mid_price() == w[0].mid_price())
        .count();
    let zero_return_fraction = if pairs == 0 {
        1.0
    } else {
        zero as f64 / pairs as f64
    };

    let mut ohlc = Table::new(vec!["date", "open", "high", "low", "close", "snapshots"]);
    let mut day_rows: Vec<(i64, f64, f64, f64, f64, u64)> = Vec::new();
    for snap in &snaps {
        let day = (snap.time / 86_400.0).floor() as i64;
        let mid = snap.mid_price();
        match day_rows.last_mut() {
            Some(row) if row.0 == day => {
                row.2 = row.2.max(mid);
                row.3 = row.3.min(mid);
                row.4 = mid;
                row.5 += 1;
            }
            _ => day_rows.push((day, mid, mid, mid, mid, 1)),
        }
    }
    for (day, open, high, low, close, count) in &day_rows {
        let date = chrono::DateTime::from_timestamp(day * 86_400, 0)
            .expect("epoch day in range")
            .format("%Y-%m-%d")
            .to_string();
        ohlc.push(vec![
            Cell::Str(date),
            Cell::F64(*open),
            Cell::F64(*high),
            Cell::F64(*low),
            Cell::F64(*close),
            Cell::Int(*count),
        ]);
    }
    let ohlc_path = ohlc.write(&rc.out, "ohlc", rc.format)?;

    let mut notice: Option<String> = None;
    let mut correlation: Option<f64> = None;
    let mut events = 0usize;
    let mut degenerate = 0usize;
    let mut gap_mean: Option<f64> = None;
    let mut gap_min: Option<f64> = None;
    let mut gap_max: Option<f64> = None;
    let mut deciles_path: Option<PathBuf> = None;

    match extract_events(&snaps, rc.depth) {
        Ok(series) => {
            events = series.len();
            degenerate = series.degenerate_imbalances;
            if series.len() >= 2 {
                let gaps: Vec<f64> = series.times.windows(2).map(|w| w[1] - w[0]).collect();
                gap_mean = Some(gaps.iter().sum::<f64>() / gaps.len() as f64);
                gap_min = gaps.iter().copied().reduce(f64::min);
                gap_max = gaps.iter().copied().reduce(f64::max);
            }
            match decile_correlation(&series) {
                Ok(stats) => {
                    let mut table =
                        Table::new(vec!["decile", "mean_imbalance", "mean_return"]);
                    for (i, (bi, r)) in stats
                        .mean_imbalance
                        .iter()
                        .zip(&stats.mean_return)
                        .enumerate()
                    {
                        table.push(vec![
                            Cell::Int(i as u64 + 1),
                            Cell::F64(*bi),
                            Cell::F64(*r),
                        ]);
                    }
                    deciles_path = Some(table.write(&rc.out, "deciles", rc.format)?);
                    correlation = Some(stats.correlation);
                }
                Err(e) => notice = Some(format!("decile analysis skipped: {e}")),
            }
        }
        Err(e @ (lobcast::Error::EmptySeries | lobcast::Error::InsufficientData { .. })) => {
            notice = Some(format!("decile analysis skipped: {e}"));
        }
        Err(e) => return Err(e.into()),
    }

    write_json(
        &rc.out.join("summary.json"),
        &json!({
            "snapshots": snaps.len(),
            "events": events,
            "zero_return_fraction": zero_return_fraction,
            "correlation": correlation,
            "degenerate_imbalances": degenerate,
            "gap_mean_secs": gap_mean,
            "gap_min_secs": gap_min,
            "gap_max_secs": gap_max,
            "notice": notice,
        }),
    )?;

    println!(
        "analyze: {} snapshots, {} events, zero-return fraction {}",
        snaps.len(),
        events,
        num(zero_return_fraction)
    );
    match correlation {
        Some(rho) => println!("decile correlation {}", num(rho)),
        None => println!("{}", notice.as_deref().unwrap_or("decile analysis skipped")),
    }
    println!("wrote {}", ohlc_path.display());
    if let Some(p) = deciles_path {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn fit_hawkes(rc: &RunConfig) -> Result<(), CliError> {
    let series = load_events(rc)?;
    let window = rc
        .t0
        .map(|t0| Span::new(t0 - rc.hp.hawkes_train_mins * 60.0, t0));
    let fit = fit_mle(
        &series.times,
        &FitConfig {
            window,
            ..FitConfig::default()
        },
    )?;
    ensure_out(rc)?;
    write_json(
        &rc.out.join("hawkes.json"),
        &json!({
            "mu": fit.params.mu,
            "alpha": fit.params.alpha,
            "beta": fit.params.beta,
            "branching_ratio": fit.params.branching_ratio(),
            "loglik": fit.loglik,
            "converged": fit.converged,
            "seed": rc.seed,
        }),
    )?;
    println!(
        "fit-hawkes: mu {} alpha {} beta {} (branching {}, loglik {}, converged {})",
        num(fit.params.mu),
        num(fit.params.alpha),
        num(fit.params.beta),
        num(fit.params.branching_ratio()),
        num(fit.loglik),
        fit.converged
    );
    Ok(())
}

pub fn forecast(rc: &RunConfig) -> Result<(), CliError> {
    let series = load_events(rc)?;
    let t0 = pick_t0(rc, &series)?;
    let window = rc.hp.window_at(t0);
    let forecast = match &rc.predictor {
        PredictorKind::Hawkes(cfg) => {
            let fit = fit_mle(
                &series.times,
                &FitConfig {
                    window: Some(window.hawkes_train),
                    ..FitConfig::default()
                },
            )?;
            let fc = ForecastConfig {
                delta_t: rc.hp.delta_t_secs,
                step: 1.0,
                warm_up_secs: rc.hp.warm_up_mins * 60.0,
                conditioning: cfg.conditioning,
                refit_window_secs: cfg.refit_window_secs,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
            let mut f = rolling_forecast(&series.times, &fit.params, window.sim, &fc, &mut rng)?;
            // Clamp drawn waits up to the event-clock resolution, matching
            // the backtest.
            for p in &mut f.points {
                p.predicted = p.predicted.max(p.issued_at + rc.settings.min_gap_secs);
            }
            f
        }
        other => benchmark_forecast(&series, other, window.sim, rc.hp.delta_t_secs, 1.0),
    };
    ensure_out(rc)?;
    let mut table = Table::new(vec!["issued_at", "predicted"]);
    for p in &forecast.points {
        table.push(vec![Cell::F64(p.issued_at), Cell::F64(p.predicted)]);
    }
    let path = table.write(&rc.out, "predictions", rc.format)?;
    println!(
        "forecast[{}] t0 {}: {} predictions ({} attempts, {} rejected, {} suppressed)",
        rc.predictor.name(),
        num(t0),
        forecast.points.len(),
        forecast.attempts,
        forecast.rejected,
        forecast.suppressed
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn backtest(rc: &RunConfig) -> Result<(), CliError> {
    let series = load_events(rc)?;
    let t0 = pick_t0(rc, &series)?;
    let window = rc.hp.window_at(t0);
    let srivc = SrivcConfig::default();
    let result = run_scenario(
        &series,
        &window,
        &rc.predictor,
        &rc.hp,
        &rc.settings,
        &srivc,
        0,
        rc.seed,
    )?;
    ensure_out(rc)?;
    write_json(&rc.out.join("result.json"), &result)?;
    let mut table = Table::new(vec!["time", "cumulative_profit"]);
    for (t, p) in &result.profit_series {
        table.push(vec![Cell::F64(*t), Cell::F64(*p)]);
    }
    let series_path = table.write(&rc.out, "profit_series", rc.format)?;
    println!(
        "backtest[{}] t0 {}: {} records, accuracy {}, profit {}",
        result.predictor,
        num(t0),
        result.records.len(),
        result
            .accuracy
            .map(num)
            .unwrap_or_else(|| "n/a".to_string()),
        num(result.total_profit)
    );
    println!("wrote {}", rc.out.join("result.json").display());
    println!("wrote {}", series_path.display());
    Ok(())
}

pub fn montecarlo(rc: &RunConfig, scenarios_flag: Option<usize>) -> Result<(), CliError> {
    let n = scenarios_flag.unwrap_or(rc.scenarios);
    if n == 0 {
        return Err(CliError::Usage("scenarios must be at least 1".into()));
    }
    let series = load_events(rc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let anchors = sample_scenarios(&series, n, &rc.hp, &rc.settings, &mut rng)?;
    if anchors.is_empty() {
        return Err(CliError::Core(lobcast::Error::Domain(
            "no scenario anchor in the data span passes validation".into(),
        )));
    }
    if anchors.len() < n {
        eprintln!(
            "only {} of {} requested scenario anchors fit the data",
            anchors.len(),
            n
        );
    }
    let srivc = SrivcConfig::default();
    let mc = monte_carlo(
        &series,
        &anchors,
        &PredictorKind::all(),
        &rc.hp,
        &rc.settings,
        &srivc,
        rc.seed,
    );
    for skip in &mc.skipped {
        eprintln!(
            "skipped scenario {} (t0 {}) {}: {}",
            skip.scenario_id,
            num(skip.t0),
            skip.predictor,
            skip.message
        );
    }
    ensure_out(rc)?;

    let mut aggregate = Table::new(vec![
        "scenario_id",
        "t0",
        "predictor",
        "accuracy",
        "total_profit",
        "records",
        "zero_sign_records",
    ]);
    for row in &mc.rows {
        aggregate.push(vec![
            Cell::Int(row.scenario_id as u64),
            Cell::F64(row.t0),
            Cell::Str(row.predictor.clone()),
            Cell::OptF64(row.accuracy),
            Cell::F64(row.total_profit),
            Cell::Int(row.records as u64),
            Cell::Int(row.zero_sign_records as u64),
        ]);
    }
    let aggregate_path = aggregate.write(&rc.out, "aggregate", rc.format)?;

    let mut box_table = Table::new(vec!["predictor", "metric", "min", "q1", "median", "q3", "max"]);
    for summary in &mc.summaries {
        for (metric, stats) in [
            ("accuracy", &summary.accuracy),
            ("profit", &summary.profit),
        ] {
            if let Some(b) = stats {
                box_table.push(vec![
                    Cell::Str(summary.predictor.clone()),
                    Cell::Str(metric.to_string()),
                    Cell::F64(b.min),
                    Cell::F64(b.q1),
                    Cell::F64(b.median),
                    Cell::F64(b.q3),
                    Cell::F64(b.max),
                ]);
            }
        }
        let med = |s: &Option<lobcast::backtest::BoxStats>| {
            s.as_ref()
                .map(|b| num(b.median))
                .unwrap_or_else(|| "n/a".to_string())
        };
        println!(
            "montecarlo[{}] over {} scenarios: median accuracy {}, median profit {}",
            summary.predictor,
            summary.scenarios,
            med(&summary.accuracy),
            med(&summary.profit)
        );
    }
    let box_path = box_table.write(&rc.out, "boxstats", rc.format)?;
    println!("wrote {}", aggregate_path.display());
    println!("wrote {}", box_path.display());
    Ok(())
}

pub fn tune(rc: &RunConfig, grid_flag: Option<PathBuf>) -> Result<(), CliError> {
    let grid_path = grid_flag.or_else(|| rc.grid.clone()).ok_or_else(|| {
        CliError::Usage("--grid is required: a CSV of candidate hyperparameter rows".into())
    })?;
    let grid = read_grid(&grid_path)?;
    if grid.is_empty() {
        return Err(CliError::Usage(format!(
            "tuning grid {} has no rows",
            grid_path.display()
        )));
    }
    let series = load_events(rc)?;
    let t0 = pick_t0(rc, &series)?;
    let report = tune_hyperparameters(&series, &grid, t0, &rc.settings, rc.seed)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    ensure_out(rc)?;

    let mut table = Table::new(vec![
        "index",
        "hawkes_train_mins",
        "coe_train_mins",
        "warm_up_mins",
        "delta_t_secs",
        "sim_mins",
        "depth",
        "mean_abs_error",
        "predictions",
        "error",
    ]);
    for row in &report.rows {
        table.push(vec![
            Cell::Int(row.index as u64),
            Cell::F64(row.hp.hawkes_train_mins),
            Cell::F64(row.hp.coe_train_mins),
            Cell::F64(row.hp.warm_up_mins),
            Cell::F64(row.hp.delta_t_secs),
            Cell::F64(row.hp.sim_mins),
            Cell::Int(row.hp.depth as u64),
            Cell::OptF64(row.mean_abs_error),
            Cell::Int(row.predictions as u64),
            Cell::OptStr(row.error.clone()),
        ]);
    }
    let table_path = table.write(&rc.out, "tuning", rc.format)?;
    write_json(&rc.out.join("best.json"), report.best())?;

    let best = report.best();
    println!(
        "tune: best grid point {} (mean abs error {}) of {} evaluated",
        best.index,
        best.mean_abs_error
            .map(num)
            .unwrap_or_else(|| "n/a".to_string()),
        report.rows.len()
    );
    println!("wrote {}", table_path.display());
    println!("wrote {}", rc.out.join("best.json").display());
    Ok(())
}

fn read_grid(path: &std::path::Path) -> Result<Vec<HyperParams>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Usage(format!("grid file {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<HyperParams>() {
        rows.push(
            record.map_err(|e| CliError::Usage(format!("grid file {}: {e}", path.display())))?,
        );
    }
    Ok(rows)
}

pub fn synth(rc: &RunConfig, args: &SynthArgs) -> Result<(), CliError> {
    let usage = |e: lobcast::Error| CliError::Usage(e.to_string());
    let timing = match args.timing {
        TimingArg::Renewal => TimingModel::Renewal {
            min_gap: args.min_gap.unwrap_or(1.0),
            mean_extra: args.mean_extra,
        },
        TimingArg::Hawkes => TimingModel::Hawkes {
            params: HawkesParams::new(args.mu, args.alpha, args.beta).map_err(usage)?,
            min_gap: args.min_gap.unwrap_or(0.0),
        },
    };
    let returns = match args.returns {
        ReturnsArg::Linear => ReturnModel::Linear {
            gain: args.gain,
            noise_std: args.noise_std,
        },
        ReturnsArg::Filter => {
            // Poles at 4 and 6 rad/s; the numerator scales the steady-state
            // response to the requested gain.
            let a = vec![10.0, 24.0];
            let b = vec![args.gain * a[1]];
            ReturnModel::Coe {
                params: CoeParams::new(a, b).map_err(usage)?,
                noise_std: args.noise_std,
            }
        }
    };
    let cfg = SynthConfig {
        t_start: args.t_start,
        duration_secs: args.duration_secs,
        timing,
        returns,
        bi: BiConfig {
            autocorr: args.autocorr,
            shock_std: args.shock_std,
        },
        depth: rc.depth,
        levels: rc.levels,
        tick: args.tick,
        base_price: args.base_price,
        repeats_per_gap: args.repeats_per_gap,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let data = generate(&cfg, &mut rng).map_err(usage)?;
    ensure_out(rc)?;
    let path = rc.out.join("lob.csv");
    atomic_via(&path, |tmp| write_lob_csv(tmp, &data.snapshots))?;
    println!(
        "synth: {} snapshots over {} events, span [{}, {}]",
        data.snapshots.len(),
        data.event_times.len(),
        num(args.t_start),
        num(args.t_start + args.duration_secs)
    );
    println!("wrote {}", path.display());
    Ok(())
}
