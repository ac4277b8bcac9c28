//! Thinning simulation of the exponential-kernel process.

use rand::Rng;

use super::{HawkesParams, IntensityState};
use crate::error::{Error, Result};
use crate::lobdata::Span;

/// Inverse-CDF exponential draw with the given rate. Guarded away from an
/// exact zero so simulation clocks always move.
pub(crate) fn exp_draw<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen(); // [0, 1)
    let w = -(1.0 - u).ln() / rate;
    if w == 0.0 {
        f64::MIN_POSITIVE / rate
    } else {
        w
    }
}

/// Samples one realisation on `span` by thinning: between events the
/// intensity only decays, so the intensity just after the current time is a
/// valid upper bound for the next candidate.
pub fn simulate<R: Rng>(params: &HawkesParams, span: Span, rng: &mut R) -> Result<Vec<f64>> {
    simulate_into_state(params, span, rng).map(|(events, _)| events)
}

/// Like [`simulate`], additionally returning the intensity state advanced to
/// the end of the span.
pub fn simulate_into_state<R: Rng>(
    params: &HawkesParams,
    span: Span,
    rng: &mut R,
) -> Result<(Vec<f64>, IntensityState)> {
    if !(span.end > span.start) {
        return Err(Error::Domain(format!(
            "empty simulation span [{}, {}]",
            span.start, span.end
        )));
    }
    let mut state = IntensityState::new(*params);
    state.advance_to(span.start)?;
    let mut events = Vec::new();
    let mut t = span.start;
    loop {
        let upper = state.intensity(t)?; // decays until the next event
        t += exp_draw(rng, upper);
        if t > span.end {
            break;
        }
        let lambda = state.intensity(t)?;
        if rng.gen::<f64>() * upper <= lambda {
            state.absorb(t)?;
            events.push(t);
        }
    }
    state.advance_to(span.end)?;
    Ok((events, state))
}

/// Runs a simulated burn-in on `[t_start - t_warm, t_start]` and returns the
/// intensity state advanced to `t_start`, carrying the excitation of the
/// simulated events. The returned intensity at `t_start` is generally above
/// the bare baseline.
pub fn warm_up<R: Rng>(
    params: &HawkesParams,
    t_start: f64,
    t_warm: f64,
    rng: &mut R,
) -> Result<IntensityState> {
    if t_warm < 0.0 {
        return Err(Error::Domain(format!("negative warm-up span {t_warm}")));
    }
    if t_warm == 0.0 {
        let mut state = IntensityState::new(*params);
        state.advance_to(t_start)?;
        return Ok(state);
    }
    let (_, mut state) = simulate_into_state(params, Span::new(t_start - t_warm, t_start), rng)?;
    state.advance_to(t_start)?;
    Ok(state)
}
