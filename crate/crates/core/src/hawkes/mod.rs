//! Univariate self-exciting point process with exponential kernel.
//!
//! Conditional intensity: `lambda(t) = mu + sum_{t_k <= t} alpha *
//! exp(-beta (t - t_k))`. Two evaluation routes exist on purpose:
//! [`intensity_at`] sums over the whole history, [`IntensityState`] carries
//! the running excitation so a sorted history costs O(n) overall. Tests and
//! the acceptance suite hold them against each other.

mod fit;
mod forecast;
mod sim;

pub use fit::{fit_mle, FitConfig, FitResult};
pub use forecast::{
    predict_next_event, rolling_forecast, Conditioning, Forecast, ForecastConfig, ForecastPoint,
};
pub use sim::{simulate, warm_up};
pub(crate) use sim::exp_draw;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::Span;

/// Kernel parameters. `mu` is the baseline rate, each event adds an
/// exponentially decaying bump of height `alpha` and decay rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl HawkesParams {
    pub fn new(mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("baseline must be positive, got {mu}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!(
                "excitation must be non-negative, got {alpha}"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("decay must be positive, got {beta}")));
        }
        Ok(Self { mu, alpha, beta })
    }

    /// Expected offspring per event. At or above 1 the process is
    /// non-stationary.
    pub fn branching_ratio(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Long-run event rate `mu / (1 - alpha/beta)`, defined only in the
    /// stationary regime.
    pub fn stationary_rate(&self) -> Option<f64> {
        let br = self.branching_ratio();
        (br < 1.0).then(|| self.mu / (1.0 - br))
    }
}

/// Direct-summation intensity at time `t` over a sorted history of event
/// times. Events at exactly `t` contribute their full jump `alpha`.
pub fn intensity_at(params: &HawkesParams, history: &[f64], t: f64) -> Result<f64> {
    if history.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("history not sorted ascending".into()));
    }
    if history.last().is_some_and(|&last| last > t) {
        return Err(Error::Contract(format!(
            "history extends past evaluation time {t}"
        )));
    }
    let excitation: f64 = history
        .iter()
        .map(|&tk| params.alpha * (-params.beta * (t - tk)).exp())
        .sum();
    Ok(params.mu + excitation)
}

/// Running excitation term of the intensity. `excitation` equals
/// `sum alpha * exp(-beta (last_time - t_k))` over all absorbed events, so
/// `lambda(last_time) = mu + excitation`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityState {
    params: HawkesParams,
    last_time: f64,
    excitation: f64,
    events_absorbed: usize,
}

impl IntensityState {
    pub fn new(params: HawkesParams) -> Self {
        Self {
            params,
            last_time: f64::NEG_INFINITY,
            excitation: 0.0,
            events_absorbed: 0,
        }
    }

    pub fn params(&self) -> &HawkesParams {
        &self.params
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    pub fn events_absorbed(&self) -> usize {
        self.events_absorbed
    }

    fn decay_factor(&self, t: f64) -> f64 {
        if self.excitation == 0.0 {
            0.0
        } else {
            (-self.params.beta * (t - self.last_time)).exp()
        }
    }

    /// Intensity at `t >= last_time` without mutating the state.
    pub fn intensity(&self, t: f64) -> Result<f64> {
        if t < self.last_time {
            return Err(Error::Contract(format!(
                "intensity queried at {t}, before state time {}",
                self.last_time
            )));
        }
        Ok(self.params.mu + self.excitation * self.decay_factor(t))
    }

    /// Moves the state clock forward without an event.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.last_time {
            return Err(Error::Contract(format!(
                "cannot advance state backwards from {} to {t}",
                self.last_time
            )));
        }
        self.excitation *= self.decay_factor(t);
        self.last_time = t;
        Ok(())
    }

    /// Registers an event at `t`, which must not precede the state clock.
    pub fn absorb(&mut self, t: f64) -> Result<()> {
        self.advance_to(t)?;
        self.excitation += self.params.alpha;
        self.events_absorbed += 1;
        Ok(())
    }
}

/// Exact log-likelihood of sorted event times on the window `[0, t_end]`:
/// the sum of log-intensities at events (each conditioned on its strict
/// past) minus the integrated intensity. Runs in O(n) via the excitation
/// recursion.
pub fn log_likelihood(params: &HawkesParams, events: &[f64], t_end: f64) -> Result<f64> {
    if params.mu <= 0.0 || params.alpha <= 0.0 || params.beta <= 0.0 {
        return Err(Error::Domain(
            "log-likelihood requires strictly positive parameters".into(),
        ));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!("window end must be positive, got {t_end}")));
    }
    if events.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("events not sorted ascending".into()));
    }
    if let (Some(&first), Some(&last)) = (events.first(), events.last()) {
        if first < 0.0 || last > t_end {
            return Err(Error::Contract(
                "events fall outside the observation window".into(),
            ));
        }
    }

    let (mu, alpha, beta) = (params.mu, params.alpha, params.beta);
    let mut log_sum = 0.0;
    let mut a = 0.0; // running sum of exp(-beta (t_i - t_k)) over k < i
    for (i, &t) in events.iter().enumerate() {
        if i > 0 {
            a = (-beta * (t - events[i - 1])).exp() * (1.0 + a);
        }
        log_sum += (mu + alpha * a).ln();
    }
    let compensator_tail: f64 = events
        .iter()
        .map(|&t| 1.0 - (-beta * (t_end - t)).exp())
        .sum();
    Ok(log_sum - mu * t_end - alpha / beta * compensator_tail)
}

/// Kolmogorov-Smirnov test of the time-rescaling residuals. Under a correct
/// model the rescaled inter-arrivals are iid Exp(1); their CDF images are
/// tested against the uniform law. Returns the KS statistic and asymptotic
/// p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn time_rescaling_ks(params: &HawkesParams, events: &[f64]) -> Result<KsTest> {
    if events.len() < 3 {
        return Err(Error::InsufficientData {
            what: "time-rescaling test",
            need: 3,
            got: events.len(),
        });
    }
    if events.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("events not sorted ascending".into()));
    }
    let (mu, alpha, beta) = (params.mu, params.alpha, params.beta);

    // Compensator increments between consecutive events.
    let mut u: Vec<f64> = Vec::with_capacity(events.len() - 1);
    let mut excitation = 0.0; // sum of exp(-beta (t_i - t_k)), k <= i
    for w in events.windows(2) {
        let gap = w[1] - w[0];
        excitation += 1.0;
        let decay = (-beta * gap).exp();
        let xi = mu * gap + alpha / beta * excitation * (1.0 - decay);
        excitation *= decay;
        u.push(1.0 - (-xi).exp());
    }
    u.sort_by(f64::total_cmp);

    let n = u.len();
    let mut d: f64 = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((ui - lo).abs()).max((hi - ui).abs());
    }
    let lambda = ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1.0f64).powi(j + 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        p += term;
    }
    Ok(KsTest {
        statistic: d,
        p_value: p.clamp(0.0, 1.0),
        n,
    })
}

/// Shifts event times so `window.start` becomes 0, clipping to the window.
pub(crate) fn shift_into_window(events: &[f64], window: Span) -> (Vec<f64>, f64) {
    let shifted: Vec<f64> = events
        .iter()
        .filter(|&&t| t >= window.start && t <= window.end)
        .map(|&t| t - window.start)
        .collect();
    (shifted, window.length())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> HawkesParams {
        HawkesParams::new(0.5, 0.8, 1.2).unwrap()
    }

    #[test]
    fn test_intensity_single_event_one_second_ago() {
        let lambda = intensity_at(&params(), &[9.0], 10.0).unwrap();
        assert!((lambda - (0.5 + 0.8 * (-1.2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn test_intensity_empty_history_is_baseline() {
        assert_eq!(intensity_at(&params(), &[], 5.0).unwrap(), 0.5);
    }

    #[test]
    fn test_intensity_rejects_future_history() {
        assert!(intensity_at(&params(), &[11.0], 10.0).is_err());
        assert!(intensity_at(&params(), &[3.0, 2.0], 10.0).is_err());
    }

    #[test]
    fn test_state_recursion_matches_direct_sum() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let mut history: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
            history.sort_by(f64::total_cmp);
            let mut state = IntensityState::new(p);
            for &t in &history {
                state.absorb(t).unwrap();
            }
            let t_query = history.last().unwrap() + rng.gen_range(0.0..5.0);
            let direct = intensity_at(&p, &history, t_query).unwrap();
            let recursive = state.intensity(t_query).unwrap();
            assert!(
                (direct - recursive).abs() <= 1e-10 * direct.abs(),
                "direct {direct} vs recursive {recursive}"
            );
        }
    }

    #[test]
    fn test_state_rejects_time_reversal() {
        let mut state = IntensityState::new(params());
        state.absorb(5.0).unwrap();
        assert!(state.absorb(4.0).is_err());
        assert!(state.intensity(4.0).is_err());
    }

    #[test]
    fn test_log_likelihood_matches_termwise_reference() {
        // Reference path: per-event direct intensity plus closed-form
        // compensator terms, no shared recursion.
        let p = params();
        let events = [0.7, 1.1, 2.9, 3.0, 4.6];
        let t_end = 6.0;
        let mut reference = 0.0;
        for i in 0..events.len() {
            let lam: f64 = p.mu
                + events[..i]
                    .iter()
                    .map(|&tk| p.alpha * (-p.beta * (events[i] - tk)).exp())
                    .sum::<f64>();
            reference += lam.ln();
        }
        reference -= p.mu * t_end;
        for &t in &events {
            reference -= p.alpha / p.beta * (1.0 - (-p.beta * (t_end - t)).exp());
        }
        let ll = log_likelihood(&p, &events, t_end).unwrap();
        assert!((ll - reference).abs() < 1e-12, "{ll} vs {reference}");
    }

    #[test]
    fn test_log_likelihood_rejects_bad_arguments() {
        let p = params();
        assert!(log_likelihood(&p, &[1.0, 0.5], 2.0).is_err());
        assert!(log_likelihood(&p, &[1.0, 3.0], 2.0).is_err());
        assert!(log_likelihood(&p, &[-0.5], 2.0).is_err());
        let bad = HawkesParams {
            mu: 0.5,
            alpha: 0.0,
            beta: 1.2,
        };
        assert!(matches!(
            log_likelihood(&bad, &[1.0], 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn test_branching_ratio_and_stationary_rate() {
        let p = params();
        assert!((p.branching_ratio() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.stationary_rate().unwrap() - 1.5).abs() < 1e-12);
        let super_critical = HawkesParams::new(0.5, 1.3, 1.2).unwrap();
        assert!(super_critical.stationary_rate().is_none());
    }

    #[test]
    fn test_time_rescaling_accepts_true_model() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let events = simulate(&p, Span::new(0.0, 3000.0), &mut rng).unwrap();
        let ks = time_rescaling_ks(&p, &events).unwrap();
        assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
    }

    #[test]
    fn test_time_rescaling_rejects_wrong_model() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let events = simulate(&p, Span::new(0.0, 3000.0), &mut rng).unwrap();
        let wrong = HawkesParams::new(2.5, 0.1, 4.0).unwrap();
        let ks = time_rescaling_ks(&wrong, &events).unwrap();
        assert!(ks.p_value < 1e-4, "p = {}", ks.p_value);
    }
}
