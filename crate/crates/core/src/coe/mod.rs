//! Continuous-time output-error model of returns driven by book imbalance.
//!
//! `R(t) = B(p)/A(p) * BI(t) + e(t)` with `A(p) = p^na + a1 p^(na-1) + ... +
//! a_na` monic and `B(p) = b0 p^nb + ... + b_nb`, `na >= nb`. The input is
//! piecewise constant between events, so simulation uses the exact
//! discretization of the phase-variable realisation over each inter-event
//! interval; no finite differences anywhere.

mod srivc;

pub use srivc::{srivc_fit, CoeFit, SrivcConfig};

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transfer-function coefficients. `a` holds `a1..a_na` of the monic
/// denominator, `b` holds `b0..b_nb` of the numerator, highest order first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CoeParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Domain("denominator order must be at least 1".into()));
        }
        if b.is_empty() {
            return Err(Error::Domain("numerator must have at least one coefficient".into()));
        }
        if b.len() > a.len() + 1 {
            return Err(Error::Domain(format!(
                "numerator order {} exceeds denominator order {}",
                b.len() - 1,
                a.len()
            )));
        }
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite coefficient".into()));
        }
        Ok(Self { a, b })
    }

    pub fn na(&self) -> usize {
        self.a.len()
    }

    pub fn nb(&self) -> usize {
        self.b.len() - 1
    }

    /// Steady-state gain `b_nb / a_na` for a constant input.
    pub fn dc_gain(&self) -> f64 {
        self.b[self.b.len() - 1] / self.a[self.a.len() - 1]
    }

    /// Roots of the denominator polynomial.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        companion(&self.a).complex_eigenvalues().iter().copied().collect()
    }

    /// All poles strictly in the left half plane.
    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|z| z.re < 0.0)
    }
}

/// Companion matrix of the monic polynomial with coefficients `a1..an`
/// (phase-variable form: last row carries the negated coefficients).
pub(crate) fn companion(a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        m[(n - 1, j)] = -a[n - 1 - j];
    }
    m
}

/// Output row and feedthrough of the phase-variable realisation: the state
/// vector is `[w, w', ..., w^(na-1)]` with `A(p) w = u`, so `y = B(p) w`.
fn output_map(params: &CoeParams) -> (DVector<f64>, f64) {
    let na = params.na();
    let nb = params.nb();
    let b = &params.b;
    let mut c = DVector::zeros(na);
    if nb < na {
        // y = sum_j b_j w^(nb-j): pure state combination.
        for j in 0..=nb {
            c[nb - j] = b[j];
        }
        (c, 0.0)
    } else {
        // nb == na: substitute w^(na) = u - sum_i a_i w^(na-i).
        let b0 = b[0];
        for j in 1..=na {
            c[na - j] = b[j] - b0 * params.a[j - 1];
        }
        (c, b0)
    }
}

/// Exact one-interval transition for a ZOH input: `x+ = ad x + bd u`, taken
/// from the exponential of the input-augmented system matrix.
fn zoh_step(ac: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = ac.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(ac);
    aug[(n - 1, n)] = 1.0; // phase-variable input enters the last state
    let e = (aug * h).exp();
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, 1)).column(0).into_owned();
    (ad, bd)
}

/// Walks the model state across irregularly spaced samples with the input
/// held constant on each interval.
#[derive(Debug, Clone)]
pub struct CoeSimulator {
    ac: DMatrix<f64>,
    c: DVector<f64>,
    d: f64,
    state: DVector<f64>,
    time: f64,
}

impl CoeSimulator {
    pub fn new(params: &CoeParams, t_start: f64) -> Self {
        let (c, d) = output_map(params);
        Self {
            ac: companion(&params.a),
            c,
            d,
            state: DVector::zeros(params.na()),
            time: t_start,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances to `t` with `input` held constant over `[time, t]`.
    pub fn advance_to(&mut self, t: f64, input: f64) -> Result<()> {
        if t < self.time {
            return Err(Error::Contract(format!(
                "simulator cannot move backwards from {} to {t}",
                self.time
            )));
        }
        if t > self.time {
            let (ad, bd) = zoh_step(&self.ac, t - self.time);
            self.state = &ad * &self.state + bd * input;
            self.time = t;
        }
        Ok(())
    }

    /// Model output at the current time, given the input value there.
    pub fn output(&self, input: f64) -> f64 {
        self.c.dot(&self.state) + self.d * input
    }
}

/// Simulates the noise-free response at each sample time. `inputs[k]` holds
/// on `[times[k], times[k+1])`; the state is zero at `times[0]`.
pub fn simulate_response(params: &CoeParams, times: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
    if times.len() != inputs.len() {
        return Err(Error::Contract("times and inputs differ in length".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("times not strictly increasing".into()));
    }
    let mut sim = CoeSimulator::new(params, *times.first().ok_or_else(|| {
        Error::InsufficientData {
            what: "response simulation",
            need: 1,
            got: 0,
        }
    })?);
    let mut out = Vec::with_capacity(times.len());
    out.push(sim.output(inputs[0]));
    for k in 1..times.len() {
        sim.advance_to(times[k], inputs[k - 1])?;
        out.push(sim.output(inputs[k]));
    }
    Ok(out)
}

/// Return prediction at `t_hat`: replays the identified model over the
/// imbalance history (zero initial state at the first event), then holds the
/// most recent imbalance `bi_now` from the last event to `t_hat`.
pub fn coe_predict(
    params: &CoeParams,
    history_times: &[f64],
    history_bi: &[f64],
    bi_now: f64,
    t_hat: f64,
) -> Result<f64> {
    if !params.is_stable() {
        return Err(Error::Domain("prediction requires a stable model".into()));
    }
    if history_times.is_empty() {
        return Err(Error::Contract("prediction needs at least one event".into()));
    }
    if history_times.len() != history_bi.len() {
        return Err(Error::Contract("times and imbalances differ in length".into()));
    }
    if history_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("history times not strictly increasing".into()));
    }
    let last = history_times[history_times.len() - 1];
    if t_hat <= last {
        return Err(Error::Contract(format!(
            "prediction time {t_hat} does not lie beyond the last event {last}"
        )));
    }
    let mut sim = CoeSimulator::new(params, history_times[0]);
    for k in 1..history_times.len() {
        sim.advance_to(history_times[k], history_bi[k - 1])?;
    }
    sim.advance_to(t_hat, bi_now)?;
    Ok(sim.output(bi_now))
}
