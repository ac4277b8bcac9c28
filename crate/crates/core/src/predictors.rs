//! Next-event-time predictor strategies compared in the backtest: perfect
//! foresight, a constant one-second offset, a trailing mean of inter-event
//! gaps, and the self-exciting intensity model.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hawkes::{predict_next_event, ForecastConfig, IntensityState};

/// Predictor selection, carrying per-strategy settings.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    /// Perfect knowledge of the next event time.
    Oracle,
    /// Always one second ahead, the resolution floor of the event clock.
    Naive,
    /// Mean inter-event gap over the trailing window.
    MovingAverage { window_secs: f64 },
    /// Intensity-model forecast; timing fields are overridden by the
    /// backtest hyperparameters, conditioning and refit settings are kept.
    Hawkes(ForecastConfig),
}

impl PredictorKind {
    pub fn moving_average() -> Self {
        PredictorKind::MovingAverage { window_secs: 60.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Oracle => "oracle",
            PredictorKind::Naive => "naive",
            PredictorKind::MovingAverage { .. } => "ma",
            PredictorKind::Hawkes(_) => "hawkes",
        }
    }

    /// The four strategies under their canonical names and defaults.
    pub fn all() -> Vec<PredictorKind> {
        vec![
            PredictorKind::Oracle,
            PredictorKind::Naive,
            PredictorKind::moving_average(),
            PredictorKind::Hawkes(ForecastConfig::default()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorKind::MovingAverage { window_secs } if *window_secs <= 0.0 => Err(
                Error::Domain(format!("window must be positive, got {window_secs}")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(PredictorKind::Oracle),
            "naive" => Ok(PredictorKind::Naive),
            "ma" => Ok(PredictorKind::moving_average()),
            "hawkes" => Ok(PredictorKind::Hawkes(ForecastConfig::default())),
            other => Err(Error::Domain(format!(
                "unknown predictor {other:?}, expected oracle|naive|ma|hawkes"
            ))),
        }
    }
}

/// First actual event strictly after `t`, if any.
pub fn oracle_next(actual_events: &[f64], t: f64) -> Option<f64> {
    let idx = actual_events.partition_point(|&e| e <= t);
    actual_events.get(idx).copied()
}

/// One second from the issue instant.
pub fn naive_next(t: f64) -> f64 {
    t + 1.0
}

/// Issue time plus the mean inter-event gap among history events in
/// `[t - window_secs, t]`; with fewer than two events in the window, falls
/// back to the one-second offset.
pub fn ma_next(history: &[f64], t: f64, window_secs: f64) -> f64 {
    let lo = history.partition_point(|&e| e < t - window_secs);
    let hi = history.partition_point(|&e| e <= t);
    let window = &history[lo..hi];
    if window.len() < 2 {
        return naive_next(t);
    }
    let mean_gap =
        window.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (window.len() - 1) as f64;
    t + mean_gap
}

/// Intensity-model draw at the issue instant; pure delegation.
pub fn hawkes_next<R: Rng>(
    state: &IntensityState,
    t: f64,
    delta_t: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    predict_next_event(state, t, delta_t, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::HawkesParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn test_oracle_returns_first_strictly_future_event() {
        let events = [10.0, 12.0, 15.0];
        assert_eq!(oracle_next(&events, 11.0), Some(12.0));
        assert_eq!(oracle_next(&events, 12.0), Some(15.0));
        assert_eq!(oracle_next(&events, 15.0), None);
        assert_eq!(oracle_next(&events, 20.0), None);
    }

    #[test]
    fn test_naive_is_constant_offset() {
        assert_eq!(naive_next(0.0), 1.0);
        assert_eq!(naive_next(100.5), 101.5);
        for t in [0.0, 3.7, 1e6] {
            assert_eq!(naive_next(t) - t, 1.0);
        }
    }

    #[test]
    fn test_ma_uniform_gaps() {
        let t = 100.0;
        let events = [t - 4.0, t - 3.0, t - 2.0, t - 1.0];
        assert_eq!(ma_next(&events, t, 60.0), t + 1.0);
    }

    #[test]
    fn test_ma_single_gap() {
        let t = 100.0;
        let events = [t - 50.0, t - 20.0];
        assert_eq!(ma_next(&events, t, 60.0), t + 30.0);
    }

    #[test]
    fn test_ma_falls_back_with_sparse_window() {
        let t = 100.0;
        assert_eq!(ma_next(&[t - 10.0], t, 60.0), t + 1.0);
        assert_eq!(ma_next(&[], t, 60.0), t + 1.0);
        // Events outside the window do not count.
        assert_eq!(ma_next(&[t - 70.0, t - 65.0, t - 5.0], t, 60.0), t + 1.0);
    }

    #[test]
    fn test_ma_window_boundaries_inclusive() {
        let t = 100.0;
        // Exactly at t - W and exactly at t both count.
        assert_eq!(ma_next(&[t - 60.0, t], t, 60.0), t + 60.0);
    }

    #[test]
    fn test_ma_exact_for_synthetic_uniform_gap() {
        for gap in [0.5, 1.0, 2.5] {
            let t = 200.0;
            let events: Vec<f64> = (1..=20).map(|k| t - gap * k as f64).collect();
            let mut sorted = events.clone();
            sorted.sort_by(f64::total_cmp);
            let got = ma_next(&sorted, t, 30.0);
            assert!((got - (t + gap)).abs() < 1e-12);
        }
    }

    #[test]
    fn test_all_predictions_strictly_future() {
        let events = [1.0, 2.0, 3.5, 7.0, 9.0];
        for t in [0.0, 2.0, 6.9, 8.5] {
            if let Some(p) = oracle_next(&events, t) {
                assert!(p > t);
            }
            assert!(naive_next(t) > t);
            assert!(ma_next(&events, t, 60.0) > t);
        }
    }

    #[test]
    fn test_hawkes_next_matches_direct_call() {
        let params = HawkesParams::new(0.5, 0.8, 1.2).unwrap();
        let state = IntensityState::new(params);
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let via_wrapper = hawkes_next(&state, 0.0, 5.0, &mut rng_a).unwrap();
        let direct = predict_next_event(&state, 0.0, 5.0, &mut rng_b).unwrap();
        assert_eq!(via_wrapper, direct);
    }

    #[test]
    fn test_parse_names() {
        assert_eq!("oracle".parse::<PredictorKind>().unwrap().name(), "oracle");
        assert_eq!("naive".parse::<PredictorKind>().unwrap().name(), "naive");
        assert_eq!("ma".parse::<PredictorKind>().unwrap().name(), "ma");
        assert_eq!("hawkes".parse::<PredictorKind>().unwrap().name(), "hawkes");
        assert!("bogus".parse::<PredictorKind>().is_err());
    }

    #[test]
    fn test_ma_window_validation() {
        assert!(PredictorKind::MovingAverage { window_secs: 0.0 }
            .validate()
            .is_err());
        assert!(PredictorKind::moving_average().validate().is_ok());
    }
}
