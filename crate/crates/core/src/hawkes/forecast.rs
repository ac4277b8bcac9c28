//! Next-event time sampling and the rolling forecast loop.

use rand::Rng;

use super::sim::exp_draw;
use super::{fit_mle, warm_up, FitConfig, HawkesParams, IntensityState};
use crate::error::{Error, Result};
use crate::lobdata::Span;

/// What the intensity is conditioned on before the forecast span starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Burn in on events simulated from the fitted model.
    SimulatedWarmup,
    /// Absorb the observed events inside the warm-up horizon instead.
    ObservedHistory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastConfig {
    /// Forecast window: a drawn waiting time beyond this is discarded, and
    /// at most one prediction is saved per window of this length.
    pub delta_t: f64,
    /// Cadence of issue attempts, seconds.
    pub step: f64,
    /// Length of the warm-up horizon before the span starts.
    pub warm_up_secs: f64,
    pub conditioning: Conditioning,
    /// When set, parameters are refitted at every step on the observed
    /// events inside a trailing window of this length.
    pub refit_window_secs: Option<f64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            delta_t: 5.0,
            step: 1.0,
            warm_up_secs: 150.0,
            conditioning: Conditioning::SimulatedWarmup,
            refit_window_secs: None,
        }
    }
}

/// One saved prediction: issued standing at `issued_at`, naming `predicted`
/// as the next event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastPoint {
    pub issued_at: f64,
    pub predicted: f64,
}

/// Rolling forecast output with loop diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub points: Vec<ForecastPoint>,
    /// Issue times at which a waiting time was actually drawn.
    pub attempts: usize,
    /// Draws discarded because they exceeded the forecast window.
    pub rejected: usize,
    /// Issue times skipped because a saved prediction's window was open.
    pub suppressed: usize,
}

/// Draws the waiting time to the next event with the intensity frozen at its
/// value at `t`, returning the predicted event time if it lands within the
/// forecast window.
pub fn predict_next_event<R: Rng>(
    state: &IntensityState,
    t: f64,
    delta_t: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    if delta_t < 0.0 {
        return Err(Error::Domain(format!("negative forecast window {delta_t}")));
    }
    let lambda = state.intensity(t)?;
    let x = exp_draw(rng, lambda);
    Ok((x <= delta_t).then_some(t + x))
}

/// Walks issue times across `span` at the configured cadence, conditioning
/// the intensity on the warm-up state plus events observed so far, and saves
/// at most one prediction per forecast window.
pub fn rolling_forecast<R: Rng>(
    events: &[f64],
    fitted: &HawkesParams,
    span: Span,
    cfg: &ForecastConfig,
    rng: &mut R,
) -> Result<Forecast> {
    if !(span.end > span.start) {
        return Err(Error::Domain("empty forecast span".into()));
    }
    if !(cfg.step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {}", cfg.step)));
    }
    if events.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("events not sorted ascending".into()));
    }

    let mut params = *fitted;
    let mut state = match cfg.conditioning {
        Conditioning::SimulatedWarmup => warm_up(&params, span.start, cfg.warm_up_secs, rng)?,
        Conditioning::ObservedHistory => {
            let mut s = IntensityState::new(params);
            let horizon = span.start - cfg.warm_up_secs;
            for &t in events.iter().filter(|&&t| t >= horizon && t <= span.start) {
                s.absorb(t)?;
            }
            s.advance_to(span.start)?;
            s
        }
    };

    // Events at or before span.start are covered by the conditioning above.
    let mut next_event = events.partition_point(|&t| t <= span.start);

    let mut out = Forecast {
        points: Vec::new(),
        attempts: 0,
        rejected: 0,
        suppressed: 0,
    };
    let mut window_open_until = f64::NEG_INFINITY;
    let steps = ((span.end - span.start) / cfg.step).ceil() as usize;
    for k in 0..steps {
        let t = span.start + k as f64 * cfg.step;
        if t >= span.end {
            break;
        }
        while next_event < events.len() && events[next_event] <= t {
            state.absorb(events[next_event])?;
            next_event += 1;
        }
        if let Some(window) = cfg.refit_window_secs {
            let lo = events.partition_point(|&e| e < t - window);
            let recent = &events[lo..next_event];
            if recent.len() >= 10 {
                let refit = fit_mle(
                    recent,
                    &FitConfig {
                        window: Some(Span::new(t - window, t)),
                        ..FitConfig::default()
                    },
                )?;
                params = refit.params;
                let mut s = IntensityState::new(params);
                for &e in recent {
                    s.absorb(e)?;
                }
                s.advance_to(t)?;
                state = s;
            }
        }
        if t < window_open_until {
            out.suppressed += 1;
            continue;
        }
        out.attempts += 1;
        match predict_next_event(&state, t, cfg.delta_t, rng)? {
            Some(predicted) => {
                out.points.push(ForecastPoint {
                    issued_at: t,
                    predicted,
                });
                window_open_until = t + cfg.delta_t;
            }
            None => out.rejected += 1,
        }
    }
    Ok(out)
}
