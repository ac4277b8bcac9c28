//! Scenario engine: runs the full prediction pipeline over a validated
//! window, matches predictions to realized returns, scores sign accuracy,
//! simulates the resulting trades, aggregates Monte Carlo repetitions, and
//! tunes the timing hyperparameters.

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coe::{srivc_fit, CoeSimulator, SrivcConfig};
use crate::error::{Error, Result, Stage};
use crate::hawkes::{
    fit_mle, rolling_forecast, FitConfig, Forecast, ForecastConfig, ForecastPoint,
};
use crate::lobdata::{validate_scenario, EventSeries, ScenarioWindow, Span, ValidationSettings};
use crate::predictors::{ma_next, naive_next, oracle_next, PredictorKind};

pub const DEFAULT_STAKE: f64 = 10_000.0;

/// Timing hyperparameters of one backtest scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub hawkes_train_mins: f64,
    pub coe_train_mins: f64,
    pub warm_up_mins: f64,
    pub delta_t_secs: f64,
    pub sim_mins: f64,
    pub depth: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            hawkes_train_mins: 20.0,
            coe_train_mins: 50.0,
            warm_up_mins: 2.5,
            delta_t_secs: 5.0,
            sim_mins: 2.0,
            depth: 8,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("hawkes_train_mins", self.hawkes_train_mins),
            ("coe_train_mins", self.coe_train_mins),
            ("warm_up_mins", self.warm_up_mins),
            ("delta_t_secs", self.delta_t_secs),
            ("sim_mins", self.sim_mins),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.depth == 0 {
            return Err(Error::Domain("depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Training, warm-up and simulation spans anchored at `t0`.
    pub fn window_at(&self, t0: f64) -> ScenarioWindow {
        ScenarioWindow {
            t0,
            hawkes_train: Span::new(t0 - self.hawkes_train_mins * 60.0, t0),
            coe_train: Span::new(t0 - self.coe_train_mins * 60.0, t0),
            sim: Span::new(t0, t0 + self.sim_mins * 60.0),
        }
    }

    pub fn sim_secs(&self) -> f64 {
        self.sim_mins * 60.0
    }
}

/// One matched prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub issued_at: f64,
    pub predicted: f64,
    pub bi_at_issue: f64,
    pub predicted_return: f64,
    pub reference_return: f64,
    pub reference_time: f64,
    /// Absolute distance between the predicted time and the matched event.
    pub matching_distance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    /// Fraction of sign-definite predictions with the correct sign; `None`
    /// when nothing was scored.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (self.true_pos + self.true_neg) as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult {
    pub scenario_id: usize,
    pub predictor: String,
    pub records: Vec<PredictionRecord>,
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    /// Matched records dropped from scoring because either sign was zero.
    pub zero_sign_records: usize,
    /// Predictions whose matched reference event also served an earlier one.
    pub reused_references: usize,
    /// Cumulative profit after each trade, stamped at the reference time.
    pub profit_series: Vec<(f64, f64)>,
    pub total_profit: f64,
    pub forecast_attempts: usize,
    pub forecast_rejected: usize,
    pub forecast_suppressed: usize,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Return of the actual event nearest to the predicted time, preferring
/// events with a non-zero return; ties break toward the earlier event.
/// Returns `(reference return, reference time, index, distance)`.
pub fn match_reference_return(t_hat: f64, series: &EventSeries) -> Result<(f64, f64, usize, f64)> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let pick = |valid: &dyn Fn(usize) -> bool| -> Option<(usize, f64)> {
        let split = series.times.partition_point(|&t| t < t_hat);
        let left = (0..split).rev().find(|&i| valid(i));
        let right = (split..series.len()).find(|&i| valid(i));
        match (left, right) {
            (Some(l), Some(r)) => {
                let dl = (series.times[l] - t_hat).abs();
                let dr = (series.times[r] - t_hat).abs();
                // Earlier event wins ties.
                if dl <= dr {
                    Some((l, dl))
                } else {
                    Some((r, dr))
                }
            }
            (Some(l), None) => Some((l, (series.times[l] - t_hat).abs())),
            (None, Some(r)) => Some((r, (series.times[r] - t_hat).abs())),
            (None, None) => None,
        }
    };
    let nonzero = |i: usize| series.returns[i] != 0.0;
    let any = |_: usize| true;
    let (idx, dist) = pick(&nonzero)
        .or_else(|| pick(&any))
        .expect("non-empty series always matches");
    Ok((series.returns[idx], series.times[idx], idx, dist))
}

/// Confusion counts over sign-definite records plus the count of records
/// excluded because the predicted or reference sign was exactly zero.
pub fn compute_accuracy(records: &[PredictionRecord]) -> (Confusion, Option<f64>, usize) {
    let mut confusion = Confusion::default();
    let mut zero_sign = 0;
    for rec in records {
        match (sign(rec.predicted_return), sign(rec.reference_return)) {
            (0, _) | (_, 0) => zero_sign += 1,
            (1, 1) => confusion.true_pos += 1,
            (-1, -1) => confusion.true_neg += 1,
            (1, -1) => confusion.false_pos += 1,
            (-1, 1) => confusion.false_neg += 1,
            _ => unreachable!(),
        }
    }
    let accuracy = confusion.accuracy();
    (confusion, accuracy, zero_sign)
}

/// Marks each prediction to its reference event: long when the predicted
/// return is positive, short when negative, skipped when exactly zero.
/// Returns the cumulative profit series (stamped at reference times) and the
/// total.
pub fn simulate_trading(records: &[PredictionRecord], stake: f64) -> (Vec<(f64, f64)>, f64) {
    let mut series = Vec::new();
    let mut total = 0.0;
    for rec in records {
        let s = sign(rec.predicted_return);
        if s == 0 {
            continue;
        }
        total += stake * f64::from(s) * rec.reference_return;
        series.push((rec.reference_time, total));
    }
    (series, total)
}

/// Issue-cadence loop shared by the benchmark predictors: walks the sim span
/// at the same step and one-prediction-per-window suppression rule as the
/// intensity-model forecast, so trade counts stay comparable.
pub fn benchmark_forecast(
    series: &EventSeries,
    kind: &PredictorKind,
    span: Span,
    delta_t: f64,
    step: f64,
) -> Forecast {
    let mut points = Vec::new();
    let mut attempts = 0;
    let mut suppressed = 0;
    let mut window_open_until = f64::NEG_INFINITY;
    let mut k = 0usize;
    loop {
        let t = span.start + k as f64 * step;
        if t >= span.end {
            break;
        }
        k += 1;
        if t < window_open_until {
            suppressed += 1;
            continue;
        }
        attempts += 1;
        let predicted = match kind {
            PredictorKind::Oracle => oracle_next(&series.times, t),
            PredictorKind::Naive => Some(naive_next(t)),
            PredictorKind::MovingAverage { window_secs } => {
                Some(ma_next(&series.times, t, *window_secs))
            }
            PredictorKind::Hawkes(_) => unreachable!("handled by rolling_forecast"),
        };
        if let Some(p) = predicted {
            points.push(ForecastPoint {
                issued_at: t,
                predicted: p,
            });
            window_open_until = t + delta_t;
        }
    }
    Forecast {
        points,
        attempts,
        rejected: 0,
        suppressed,
    }
}

/// Predicted return for each forecast point by advancing one model state
/// along the event history and holding the issue-time imbalance to the
/// predicted instant. The state starts from zero at the first event past
/// `history_start`, mirroring the reference single-shot replay.
fn predict_returns(
    sim: &mut CoeSimulator,
    next_event: &mut usize,
    series: &EventSeries,
    points: &[ForecastPoint],
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let last = series
            .last_event_at_or_before(p.issued_at)
            .ok_or_else(|| Error::Contract("no event precedes the issue time".into()))?;
        while *next_event <= last {
            let i = *next_event;
            sim.advance_to(series.times[i], series.imbalances[i - 1])?;
            *next_event += 1;
        }
        let bi_now = series.imbalances[last];
        let mut branch = sim.clone();
        branch.advance_to(p.predicted, bi_now)?;
        out.push((bi_now, branch.output(bi_now)));
    }
    Ok(out)
}

/// Runs one scenario end to end: validation, event-time forecasting with the
/// chosen predictor, return-model identification, return prediction,
/// matching, scoring and trading. The predictor's timing fields (`delta_t`,
/// step, warm-up) are taken from `hp`, the single source of scenario timing;
/// an intensity-model predictor keeps only its conditioning and refit
/// settings. Any stage failure is tagged with the scenario id and stage.
#[allow(clippy::too_many_arguments)]
pub fn run_scenario(
    series: &EventSeries,
    window: &ScenarioWindow,
    predictor: &PredictorKind,
    hp: &HyperParams,
    settings: &ValidationSettings,
    srivc: &SrivcConfig,
    scenario_id: usize,
    seed: u64,
) -> Result<BacktestResult> {
    hp.validate().map_err(|e| e.at_stage(scenario_id, Stage::Validation))?;
    predictor
        .validate()
        .map_err(|e| e.at_stage(scenario_id, Stage::Validation))?;
    let report = validate_scenario(series, window, settings);
    if !report.pass() {
        return Err(Error::Domain(format!(
            "scenario window failed data validation: {report:?}"
        ))
        .at_stage(scenario_id, Stage::Validation));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Event-time forecast.
    let forecast = match predictor {
        PredictorKind::Hawkes(cfg) => {
            let fit = fit_mle(
                &series.times,
                &FitConfig {
                    window: Some(window.hawkes_train),
                    ..FitConfig::default()
                },
            )
            .map_err(|e| e.at_stage(scenario_id, Stage::HawkesFit))?;
            let fc = ForecastConfig {
                delta_t: hp.delta_t_secs,
                step: 1.0,
                warm_up_secs: hp.warm_up_mins * 60.0,
                conditioning: cfg.conditioning,
                refit_window_secs: cfg.refit_window_secs,
            };
            let mut f = rolling_forecast(&series.times, &fit.params, window.sim, &fc, &mut rng)
                .map_err(|e| e.at_stage(scenario_id, Stage::Forecast))?;
            // Drawn waiting times below the event-clock resolution are
            // clamped up to it; the benchmarks respect it by construction.
            for p in &mut f.points {
                p.predicted = p.predicted.max(p.issued_at + settings.min_gap_secs);
            }
            f
        }
        other => benchmark_forecast(series, other, window.sim, hp.delta_t_secs, 1.0),
    };

    // Return-model identification on the training window before t0.
    let coe_range = series.range_in(window.coe_train.start, window.coe_train.end);
    let fit = srivc_fit(
        &series.times[coe_range.clone()],
        &series.imbalances[coe_range.clone()],
        &series.returns[coe_range.clone()],
        srivc,
    )
    .map_err(|e| e.at_stage(scenario_id, Stage::CoeFit))?;

    // Return prediction per forecast point.
    let first_idx = coe_range.start;
    let mut sim = CoeSimulator::new(&fit.params, series.times[first_idx]);
    let mut next_event = first_idx + 1;
    let returns = predict_returns(&mut sim, &mut next_event, series, &forecast.points)
        .map_err(|e| e.at_stage(scenario_id, Stage::ReturnPrediction))?;

    // Matching, scoring, trading.
    let mut records = Vec::with_capacity(forecast.points.len());
    let mut matched_indices = Vec::with_capacity(forecast.points.len());
    for (p, (bi_now, r_hat)) in forecast.points.iter().zip(returns) {
        let (r_ref, t_ref, idx, dist) = match_reference_return(p.predicted, series)
            .map_err(|e| e.at_stage(scenario_id, Stage::Accounting))?;
        matched_indices.push(idx);
        records.push(PredictionRecord {
            issued_at: p.issued_at,
            predicted: p.predicted,
            bi_at_issue: bi_now,
            predicted_return: r_hat,
            reference_return: r_ref,
            reference_time: t_ref,
            matching_distance: dist,
        });
    }
    let mut seen = matched_indices.clone();
    seen.sort_unstable();
    seen.dedup();
    let reused_references = matched_indices.len() - seen.len();

    let (confusion, accuracy, zero_sign_records) = compute_accuracy(&records);
    let (profit_series, total_profit) = simulate_trading(&records, DEFAULT_STAKE);

    Ok(BacktestResult {
        scenario_id,
        predictor: predictor.name().to_string(),
        records,
        confusion,
        accuracy,
        zero_sign_records,
        reused_references,
        profit_series,
        total_profit,
        forecast_attempts: forecast.attempts,
        forecast_rejected: forecast.rejected,
        forecast_suppressed: forecast.suppressed,
    })
}

/// Draws up to `n` scenario anchor times whose simulation windows do not
/// overlap and whose windows pass data validation. Candidates are whole
/// seconds inside the data span, visited in random order; the result is
/// sorted ascending.
pub fn sample_scenarios(
    series: &EventSeries,
    n: usize,
    hp: &HyperParams,
    settings: &ValidationSettings,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    hp.validate()?;
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let first = series.times[0];
    let last = *series.times.last().unwrap();
    let train = hp.hawkes_train_mins.max(hp.coe_train_mins) * 60.0;
    let lo = (first + train).ceil() as i64;
    let hi = (last - hp.sim_secs()).floor() as i64;
    if hi < lo {
        return Err(Error::InsufficientData {
            what: "scenario anchors",
            need: 1,
            got: 0,
        });
    }
    let mut candidates: Vec<i64> = (lo..=hi).collect();
    // Fisher-Yates with the caller's stream.
    for i in (1..candidates.len()).rev() {
        let j = rand::Rng::gen_range(rng, 0..=i);
        candidates.swap(i, j);
    }
    let mut chosen: Vec<f64> = Vec::with_capacity(n);
    for c in candidates {
        if chosen.len() == n {
            break;
        }
        let t0 = c as f64;
        let sim_end = t0 + hp.sim_secs();
        if chosen
            .iter()
            .any(|&other| t0 < other + hp.sim_secs() && other < sim_end)
        {
            continue;
        }
        if validate_scenario(series, &hp.window_at(t0), settings).pass() {
            chosen.push(t0);
        }
    }
    chosen.sort_by(f64::total_cmp);
    Ok(chosen)
}

/// Five-number summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(BoxStats {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// One scenario-predictor outcome inside a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub scenario_id: usize,
    pub t0: f64,
    pub predictor: String,
    pub accuracy: Option<f64>,
    pub total_profit: f64,
    pub records: usize,
    pub zero_sign_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedScenario {
    pub scenario_id: usize,
    pub t0: f64,
    pub predictor: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorSummary {
    pub predictor: String,
    pub scenarios: usize,
    pub accuracy: Option<BoxStats>,
    pub profit: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub rows: Vec<ScenarioRow>,
    pub skipped: Vec<SkippedScenario>,
    pub summaries: Vec<PredictorSummary>,
}

/// Runs every predictor over every scenario anchor. Scenario seeds derive
/// from the base seed and the scenario id alone, so results do not depend on
/// evaluation order; failed scenario-predictor pairs are reported, never
/// fatal.
pub fn monte_carlo(
    series: &EventSeries,
    anchors: &[f64],
    predictors: &[PredictorKind],
    hp: &HyperParams,
    settings: &ValidationSettings,
    srivc: &SrivcConfig,
    base_seed: u64,
) -> MonteCarloReport {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, &t0) in anchors.iter().enumerate() {
        let window = hp.window_at(t0);
        let seed = crate::derive_seed(base_seed, id as u64);
        for kind in predictors {
            match run_scenario(series, &window, kind, hp, settings, srivc, id, seed) {
                Ok(result) => rows.push(ScenarioRow {
                    scenario_id: id,
                    t0,
                    predictor: result.predictor.clone(),
                    accuracy: result.accuracy,
                    total_profit: result.total_profit,
                    records: result.records.len(),
                    zero_sign_records: result.zero_sign_records,
                }),
                Err(err) => skipped.push(SkippedScenario {
                    scenario_id: id,
                    t0,
                    predictor: kind.name().to_string(),
                    message: err.to_string(),
                }),
            }
        }
    }

    let summaries = predictors
        .iter()
        .map(|kind| {
            let name = kind.name();
            let mine: Vec<&ScenarioRow> = rows.iter().filter(|r| r.predictor == name).collect();
            let accuracies: Vec<f64> = mine.iter().filter_map(|r| r.accuracy).collect();
            let profits: Vec<f64> = mine.iter().map(|r| r.total_profit).collect();
            PredictorSummary {
                predictor: name.to_string(),
                scenarios: mine.len(),
                accuracy: box_stats(&accuracies),
                profit: box_stats(&profits),
            }
        })
        .collect();

    MonteCarloReport {
        rows,
        skipped,
        summaries,
    }
}

/// Absolute distance from `t` to the nearest event time.
fn nearest_event_distance(times: &[f64], t: f64) -> f64 {
    let split = times.partition_point(|&x| x < t);
    let mut best = f64::INFINITY;
    if split > 0 {
        best = best.min((times[split - 1] - t).abs());
    }
    if split < times.len() {
        best = best.min((times[split] - t).abs());
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningRow {
    pub index: usize,
    pub hp: HyperParams,
    pub mean_abs_error: Option<f64>,
    pub predictions: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningReport {
    pub rows: Vec<TuningRow>,
    pub best_index: usize,
    pub warnings: Vec<String>,
}

impl TuningReport {
    pub fn best(&self) -> &TuningRow {
        &self.rows[self.best_index]
    }
}

/// Evaluates each candidate hyperparameter set with the intensity-model
/// predictor anchored at `t0` and returns the one minimizing the mean
/// absolute distance between predicted and nearest actual event times.
/// Duplicate candidates are dropped with a warning; ties keep the earliest
/// grid point.
pub fn tune_hyperparameters(
    series: &EventSeries,
    grid: &[HyperParams],
    t0: f64,
    settings: &ValidationSettings,
    seed: u64,
) -> Result<TuningReport> {
    if grid.is_empty() {
        return Err(Error::Domain("empty tuning grid".into()));
    }
    let mut warnings = Vec::new();
    let mut unique: Vec<HyperParams> = Vec::with_capacity(grid.len());
    for (i, hp) in grid.iter().enumerate() {
        if let Some(j) = unique.iter().position(|u| u == hp) {
            warnings.push(format!("grid point {i} duplicates point {j}; dropped"));
        } else {
            unique.push(*hp);
        }
    }

    let mut rows = Vec::with_capacity(unique.len());
    for (index, hp) in unique.iter().enumerate() {
        let window = hp.window_at(t0);
        let outcome = (|| -> Result<(f64, usize)> {
            hp.validate()?;
            let report = validate_scenario(series, &window, settings);
            if !report.pass() {
                return Err(Error::Domain(format!(
                    "window failed data validation: {report:?}"
                )));
            }
            let fit = fit_mle(
                &series.times,
                &FitConfig {
                    window: Some(window.hawkes_train),
                    ..FitConfig::default()
                },
            )?;
            let fc = ForecastConfig {
                delta_t: hp.delta_t_secs,
                step: 1.0,
                warm_up_secs: hp.warm_up_mins * 60.0,
                ..ForecastConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, index as u64));
            let forecast = rolling_forecast(&series.times, &fit.params, window.sim, &fc, &mut rng)?;
            if forecast.points.is_empty() {
                return Err(Error::Domain("no predictions issued".into()));
            }
            let total: f64 = forecast
                .points
                .iter()
                .map(|p| nearest_event_distance(&series.times, p.predicted))
                .sum();
            Ok((total / forecast.points.len() as f64, forecast.points.len()))
        })();
        match outcome {
            Ok((mean, count)) => rows.push(TuningRow {
                index,
                hp: *hp,
                mean_abs_error: Some(mean),
                predictions: count,
                error: None,
            }),
            Err(err) => rows.push(TuningRow {
                index,
                hp: *hp,
                mean_abs_error: None,
                predictions: 0,
                error: Some(err.to_string()),
            }),
        }
    }

    let best_index = rows
        .iter()
        .filter_map(|r| r.mean_abs_error.map(|e| (r.index, e)))
        .fold(None::<(usize, f64)>, |best, (i, e)| match best {
            // Strict improvement only: earlier grid points win ties.
            Some((_, be)) if e >= be => best,
            _ => Some((i, e)),
        })
        .map(|(i, _)| i)
        .ok_or(Error::TuningFailed)?;

    Ok(TuningReport {
        rows,
        best_index,
        warnings,
    })
}
