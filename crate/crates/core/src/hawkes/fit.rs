//! Maximum likelihood estimation over log-transformed parameters.

use super::{log_likelihood, shift_into_window, HawkesParams};
use crate::error::{Error, Result};
use crate::lobdata::Span;
use crate::optim::nelder_mead;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Observation window. Defaults to `[first event, last event]`.
    pub window: Option<Span>,
    /// Simplex iteration cap per start.
    pub max_iters: usize,
    /// Simplex diameter tolerance in log-parameter space.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            window: None,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: HawkesParams,
    pub loglik: f64,
    pub converged: bool,
    /// Simplex iterations spent on the winning start.
    pub iterations: usize,
    /// Branching ratio at or above 1: the fitted process is non-stationary.
    /// A warning, not a rejection.
    pub supercritical: bool,
}

/// Method-of-moments anchors: the empirical rate fixes `mu` given a guessed
/// branching ratio, the mean gap fixes the decay scale.
fn start_grid(n: usize, t_total: f64) -> Vec<[f64; 3]> {
    let rate = n as f64 / t_total;
    let mut starts = Vec::with_capacity(27);
    for &branching in &[0.2, 0.5, 0.8] {
        for &beta_scale in &[0.5, 1.0, 2.0] {
            for &mu_scale in &[0.5, 1.0, 1.5] {
                let beta = beta_scale * rate.max(1e-12);
                let alpha = branching * beta;
                let mu = (mu_scale * rate * (1.0 - branching)).max(1e-12);
                starts.push([mu.ln(), alpha.ln(), beta.ln()]);
            }
        }
    }
    starts
}

/// Fits `(mu, alpha, beta)` to sorted event times by maximising the exact
/// log-likelihood with a multi-start Nelder-Mead search in log-space. Needs
/// at least 10 events. Never errors on flat likelihoods: if no start
/// converges, the best point found is returned with `converged = false`.
pub fn fit_mle(events: &[f64], config: &FitConfig) -> Result<FitResult> {
    if events.len() < 10 {
        return Err(Error::InsufficientData {
            what: "hawkes fit",
            need: 10,
            got: events.len(),
        });
    }
    if events.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("events not sorted ascending".into()));
    }
    let window = config
        .window
        .unwrap_or_else(|| Span::new(events[0], events[events.len() - 1]));
    let (shifted, t_total) = shift_into_window(events, window);
    if shifted.len() < 10 {
        return Err(Error::InsufficientData {
            what: "hawkes fit window",
            need: 10,
            got: shifted.len(),
        });
    }
    if !(t_total > 0.0) {
        return Err(Error::Domain("observation window has zero length".into()));
    }

    let objective = |z: &[f64]| -> f64 {
        let params = HawkesParams {
            mu: z[0].exp(),
            alpha: z[1].exp(),
            beta: z[2].exp(),
        };
        match log_likelihood(&params, &shifted, t_total) {
            Ok(ll) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    let mut best: Option<(f64, [f64; 3], bool, usize)> = None;
    for start in start_grid(shifted.len(), t_total) {
        let r = nelder_mead(objective, &start, 0.4, config.tol, config.max_iters);
        let candidate = (r.value, [r.x[0], r.x[1], r.x[2]], r.converged, r.iterations);
        let better = match &best {
            None => true,
            Some((v, _, c, _)) => {
                // Prefer lower objective; a converged run beats an equal
                // unconverged one.
                candidate.0 < *v || (candidate.0 == *v && candidate.2 && !c)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    let (neg_ll, z, converged, iterations) = best.expect("grid is non-empty");
    let params = HawkesParams::new(z[0].exp(), z[1].exp(), z[2].exp())?;
    Ok(FitResult {
        params,
        loglik: -neg_ll,
        converged,
        iterations,
        supercritical: params.branching_ratio() >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::simulate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn test_fit_needs_ten_events() {
        let events: Vec<f64> = (0..9).map(|i| i as f64).collect();
        assert!(matches!(
            fit_mle(&events, &FitConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn test_fit_recovers_simulated_parameters() {
        let truth = HawkesParams::new(0.5, 0.8, 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let events = simulate(&truth, Span::new(0.0, 4000.0), &mut rng).unwrap();
        assert!(events.len() > 4000);
        let fit = fit_mle(&events, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.params.mu - truth.mu).abs() / truth.mu < 0.15,
            "mu {}",
            fit.params.mu
        );
        assert!(
            (fit.params.alpha - truth.alpha).abs() / truth.alpha < 0.15,
            "alpha {}",
            fit.params.alpha
        );
        assert!(
            (fit.params.beta - truth.beta).abs() / truth.beta < 0.15,
            "beta {}",
            fit.params.beta
        );
        assert!(!fit.supercritical);
        // Truth should not beat the maximiser by more than numerical slack.
        let (shifted, t_total) =
            shift_into_window(&events, Span::new(events[0], *events.last().unwrap()));
        let ll_truth = log_likelihood(&truth, &shifted, t_total).unwrap();
        assert!(fit.loglik >= ll_truth - 1e-6);
    }

    #[test]
    fn test_fit_poisson_data_finds_near_zero_branching() {
        let truth = HawkesParams::new(1.0, 1e-12, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let events = simulate(&truth, Span::new(0.0, 4000.0), &mut rng).unwrap();
        let fit = fit_mle(&events, &FitConfig::default()).unwrap();
        let rate = events.len() as f64 / (events.last().unwrap() - events[0]);
        assert!(
            fit.params.branching_ratio() < 0.1,
            "branching {}",
            fit.params.branching_ratio()
        );
        let fitted_rate = fit.params.mu / (1.0 - fit.params.branching_ratio());
        assert!(
            (fitted_rate - rate).abs() / rate < 0.10,
            "rate {fitted_rate} vs empirical {rate}"
        );
    }

    #[test]
    fn test_fit_respects_explicit_window() {
        let truth = HawkesParams::new(0.8, 0.5, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let events = simulate(&truth, Span::new(1000.0, 3000.0), &mut rng).unwrap();
        let cfg = FitConfig {
            window: Some(Span::new(2000.0, 3000.0)),
            ..FitConfig::default()
        };
        let fit = fit_mle(&events, &cfg).unwrap();
        assert!(fit.params.mu > 0.0);
        // Stationary rate of the truth is 0.8 / (1 - 1/3) = 1.2.
        let rate = fit.params.stationary_rate().unwrap_or(f64::INFINITY);
        assert!((rate - 1.2).abs() < 0.3, "windowed rate {rate}");
    }

    #[test]
    fn test_fit_deterministic() {
        let truth = HawkesParams::new(0.5, 0.8, 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let events = simulate(&truth, Span::new(0.0, 500.0), &mut rng).unwrap();
        let a = fit_mle(&events, &FitConfig::default()).unwrap();
        let b = fit_mle(&events, &FitConfig::default()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loglik, b.loglik);
    }
}
