//! Iterative instrumental-variable identification of the output-error model
//! from irregularly sampled input/output data.
//!
//! Each pass filters the input, the output and the regressor derivatives
//! through `1/A_hat(p)`, builds instruments from the simulated noise-free
//! model output (a `1/A_hat^2` chain, exact for the piecewise-constant
//! input), solves the instrumented normal equations and repeats until the
//! coefficient vector settles. The first estimate comes from a state-variable
//! filter regression whose bandwidth follows the median event rate.

use nalgebra::{DMatrix, DVector};

use super::{companion, CoeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrivcConfig {
    pub na: usize,
    pub nb: usize,
    pub max_iters: usize,
    /// Relative coefficient-change threshold declaring convergence.
    pub tol: f64,
    /// State-variable filter bandwidth for the initial regression;
    /// defaults to the reciprocal median inter-sample gap.
    pub svf_bandwidth: Option<f64>,
    /// Samples earlier than this after the window start are excluded from
    /// the regressions; filter states start at zero and need time to forget
    /// the unknown initial conditions.
    pub transient_skip_secs: f64,
    /// Largest admissible pole magnitude, rad/s; defaults to 100 times the
    /// median sampling rate. Data from a near-memoryless map drives the
    /// estimated poles toward infinity, where they are indistinguishable
    /// from a static gain at the sampling resolution; the cap keeps the
    /// iteration finite there.
    pub pole_cap: Option<f64>,
}

impl Default for SrivcConfig {
    fn default() -> Self {
        Self {
            na: 2,
            nb: 1,
            max_iters: 30,
            tol: 1e-4,
            svf_bandwidth: None,
            transient_skip_secs: 10.0,
            pole_cap: None,
        }
    }
}

/// Fit output with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeFit {
    pub params: CoeParams,
    /// Simulation fit percent `100 (1 - ||y - y_sim|| / ||y - mean(y)||)`.
    pub fit_percent: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Output-error norm after each instrumental-variable pass.
    pub residual_norms: Vec<f64>,
    /// Iterations whose solved denominator needed pole reflection.
    pub pole_reflections: usize,
    /// Iterations whose poles exceeded the magnitude cap and were pulled in.
    pub pole_clamps: usize,
    /// The model explains essentially none of the output variance.
    pub non_informative: bool,
}

const NON_INFORMATIVE_FIT_PERCENT: f64 = 5.0;

/// States of `w = input / F(p)` at every sample time, for each signal in
/// `signals`, with the inputs held constant between samples and zero initial
/// state. `f` holds `f1..fm` of the monic filter polynomial. The exact
/// interval transitions are shared across signals.
fn zoh_filter_states(f: &[f64], times: &[f64], signals: &[&[f64]]) -> Vec<Vec<DVector<f64>>> {
    let order = f.len();
    let ac = companion(f);
    let mut aug = DMatrix::zeros(order + 1, order + 1);
    aug.view_mut((0, 0), (order, order)).copy_from(&ac);
    aug[(order - 1, order)] = 1.0;

    let mut states: Vec<Vec<DVector<f64>>> = signals
        .iter()
        .map(|_| vec![DVector::zeros(order)])
        .collect();
    for k in 1..times.len() {
        let e = (&aug * (times[k] - times[k - 1])).exp();
        let ad = e.view((0, 0), (order, order));
        let bd = e.view((0, order), (order, 1));
        for (s, signal) in signals.iter().enumerate() {
            let prev = &states[s][k - 1];
            let next = &ad * prev + &bd * signal[k - 1];
            states[s].push(next.column(0).into_owned());
        }
    }
    states
}

/// Derivative of a filtered signal at one sample: orders below the filter
/// order are states; the filter-order derivative follows from the filter
/// polynomial and the raw sample value.
fn filtered_derivative(state: &DVector<f64>, f: &[f64], raw: f64, order: usize) -> f64 {
    let m = f.len();
    if order < m {
        state[order]
    } else {
        debug_assert_eq!(order, m);
        raw - f
            .iter()
            .enumerate()
            .map(|(i, fi)| fi * state[m - 1 - i])
            .sum::<f64>()
    }
}

fn polymul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients `f1..fm` of the monic square `(p^m + f... )^2` given `a1..an`.
fn monic_square(a: &[f64]) -> Vec<f64> {
    let mut full = Vec::with_capacity(a.len() + 1);
    full.push(1.0);
    full.extend_from_slice(a);
    let sq = polymul(&full, &full);
    sq[1..].to_vec()
}

/// Reflects right-half-plane denominator roots into the left half plane and
/// pulls pole magnitudes beyond `cap` onto it. Returns the possibly rebuilt
/// coefficients plus whether reflection and clamping were applied.
fn stabilize_denominator(a: &[f64], cap: f64) -> (Vec<f64>, bool, bool) {
    let roots = companion(a).complex_eigenvalues();
    let mut reflected = false;
    let mut clamped = false;
    let scale = roots
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let fixed: Vec<nalgebra::Complex<f64>> = roots
        .iter()
        .map(|z| {
            let mut z = *z;
            if z.re >= 0.0 {
                reflected = true;
                z = nalgebra::Complex::new(-z.re.max(1e-6 * scale), z.im);
            }
            let norm = z.norm();
            if norm > cap {
                clamped = true;
                z *= cap / norm;
            }
            z
        })
        .collect();
    if !reflected && !clamped {
        return (a.to_vec(), false, false);
    }
    // Rebuild the monic polynomial from the adjusted root set.
    let mut poly = vec![nalgebra::Complex::new(1.0, 0.0)];
    for r in &fixed {
        let mut next = vec![nalgebra::Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c; // p * c
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    (
        poly[1..].iter().map(|c| c.re).collect(),
        reflected,
        clamped,
    )
}

struct Regression {
    m: DMatrix<f64>,
    rhs: DVector<f64>,
}

fn solve_regression(reg: Regression) -> Result<DVector<f64>> {
    let dim = reg.rhs.len();
    if let Some(theta) = reg.m.clone().lu().solve(&reg.rhs) {
        if theta.iter().all(|v| v.is_finite()) {
            return Ok(theta);
        }
    }
    // Escalating ridge fallback for singular or degenerate systems.
    let scale = reg.m.trace().abs().max(1e-300) / dim as f64;
    for rel in [1e-10, 1e-7, 1e-4] {
        let m = reg.m.clone() + DMatrix::identity(dim, dim) * (scale * rel);
        if let Some(theta) = m.lu().solve(&reg.rhs) {
            if theta.iter().all(|v| v.is_finite()) {
                return Ok(theta);
            }
        }
    }
    Err(Error::Domain("normal equations are singular".into()))
}

fn split_theta(theta: &DVector<f64>, na: usize, nb: usize) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = theta.as_slice()[..na].to_vec();
    let b: Vec<f64> = theta.as_slice()[na..na + nb + 1].to_vec();
    (a, b)
}

/// Simulated noise-free output `B(p) (u / A(p))` from precomputed `1/A`
/// input-filter states.
fn simulated_output(
    u_states: &[DVector<f64>],
    u: &[f64],
    a: &[f64],
    b: &[f64],
    k: usize,
) -> f64 {
    let nb = b.len() - 1;
    (0..=nb)
        .map(|j| b[j] * filtered_derivative(&u_states[k], a, u[k], nb - j))
        .sum()
}

/// Identifies the output-error model from event times, imbalance inputs and
/// return outputs. Needs at least `10 (na + nb + 1)` samples and strictly
/// increasing times. Errors with an unstable-model report only if no pass
/// ever produced a natively stable denominator.
pub fn srivc_fit(times: &[f64], bi: &[f64], r: &[f64], config: &SrivcConfig) -> Result<CoeFit> {
    let na = config.na;
    let nb = config.nb;
    if na == 0 {
        return Err(Error::Domain("denominator order must be at least 1".into()));
    }
    if nb > na {
        return Err(Error::Domain(format!(
            "numerator order {nb} exceeds denominator order {na}"
        )));
    }
    let dim = na + nb + 1;
    let n = times.len();
    if bi.len() != n || r.len() != n {
        return Err(Error::Contract("times, inputs and outputs differ in length".into()));
    }
    if n < 10 * dim {
        return Err(Error::InsufficientData {
            what: "output-error fit",
            need: 10 * dim,
            got: n,
        });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("times not strictly increasing".into()));
    }

    // Regressions ignore the filter warm-in region but always keep enough
    // samples to stay overdetermined.
    let skip_time = times[0] + config.transient_skip_secs;
    let k_min = times
        .partition_point(|&t| t < skip_time)
        .min(n - 10 * dim);

    let median_rate = {
        let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        1.0 / gaps[gaps.len() / 2]
    };
    let bandwidth = match config.svf_bandwidth {
        Some(bw) if bw > 0.0 => bw,
        Some(bw) => return Err(Error::Domain(format!("bandwidth must be positive, got {bw}"))),
        None => median_rate,
    };
    let pole_cap = match config.pole_cap {
        Some(cap) if cap > 0.0 => cap,
        Some(cap) => return Err(Error::Domain(format!("pole cap must be positive, got {cap}"))),
        None => 100.0 * median_rate,
    };

    // State-variable filter (p + bandwidth)^na for the initial regression.
    let svf: Vec<f64> = {
        let mut poly = vec![1.0];
        for _ in 0..na {
            poly = polymul(&poly, &[1.0, bandwidth]);
        }
        poly[1..].to_vec()
    };

    let build = |a_filt: &[f64], instruments: Option<(&[f64], &[f64])>| -> Regression {
        let filtered = zoh_filter_states(a_filt, times, &[r, bi]);
        let (y_states, u_states) = (&filtered[0], &filtered[1]);
        let w_states = instruments
            .map(|_| zoh_filter_states(&monic_square(a_filt), times, &[bi]).remove(0));

        let mut m = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        let mut phi = DVector::zeros(dim);
        let mut zeta = DVector::zeros(dim);
        for k in k_min..n {
            for i in 0..na {
                phi[i] = -filtered_derivative(&y_states[k], a_filt, r[k], na - 1 - i);
            }
            for j in 0..=nb {
                phi[na + j] = filtered_derivative(&u_states[k], a_filt, bi[k], nb - j);
            }
            let target = filtered_derivative(&y_states[k], a_filt, r[k], na);

            match (&instruments, &w_states) {
                (Some((_, b_prev)), Some(w)) => {
                    for i in 0..na {
                        let deriv_order = na - 1 - i;
                        let x: f64 = (0..=nb)
                            .map(|j| b_prev[j] * w[k][deriv_order + nb - j])
                            .sum();
                        zeta[i] = -x;
                    }
                    for j in 0..=nb {
                        zeta[na + j] = phi[na + j];
                    }
                }
                _ => zeta.copy_from(&phi),
            }
            m += &zeta * phi.transpose();
            rhs += &zeta * target;
        }
        Regression { m, rhs }
    };

    // Initial least squares through the state-variable filter.
    let theta0 = solve_regression(build(&svf, None))?;
    let (mut a_hat, mut b_hat) = split_theta(&theta0, na, nb);

    let mut natively_stable = false;
    let mut reflections = 0;
    let mut clamps = 0;
    let (fixed, reflected, clamped) = stabilize_denominator(&a_hat, pole_cap);
    a_hat = fixed;
    if reflected {
        reflections += 1;
    }
    if clamped {
        clamps += 1;
    }

    let mut residual_norms = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    // A convergent run returns its final iterate. An oscillating run
    // (typical when the data has little dynamic structure) returns the
    // iterate with the smallest output-error norm instead of whichever
    // pass came last.
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..config.max_iters {
        // Instruments from an uninformative model can degenerate the
        // equations; the estimate so far is then the best available.
        let Ok(theta) = solve_regression(build(&a_hat, Some((&a_hat, &b_hat)))) else {
            break;
        };
        iterations += 1;
        let (a_new, b_new) = split_theta(&theta, na, nb);

        let (a_stable, reflected, clamped) = stabilize_denominator(&a_new, pole_cap);
        if reflected {
            reflections += 1;
        } else {
            natively_stable = true;
        }
        if clamped {
            clamps += 1;
        }

        let u_states = &zoh_filter_states(&a_stable, times, &[bi])[0];
        let oe_norm = (k_min..n)
            .map(|k| {
                let sim = simulated_output(u_states, bi, &a_stable, &b_new, k);
                (r[k] - sim).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if !oe_norm.is_finite() {
            // A numerically broken candidate is never adopted.
            break;
        }

        let prev: Vec<f64> = a_hat.iter().chain(&b_hat).copied().collect();
        let next: Vec<f64> = a_stable.iter().chain(&b_new).copied().collect();
        let change = prev
            .iter()
            .zip(&next)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = prev.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);

        a_hat = a_stable;
        b_hat = b_new;
        residual_norms.push(oe_norm);
        if best.as_ref().is_none_or(|(n, _, _)| oe_norm < *n) {
            best = Some((oe_norm, a_hat.clone(), b_hat.clone()));
        }

        if change / norm < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        if let Some((_, a_best, b_best)) = best {
            a_hat = a_best;
            b_hat = b_best;
        }
    }

    if iterations > 0 && !natively_stable {
        return Err(Error::UnstableModel(
            "every instrumental-variable pass produced an unstable denominator".into(),
        ));
    }

    let params = CoeParams::new(a_hat.clone(), b_hat.clone())?;

    let u_states = &zoh_filter_states(&a_hat, times, &[bi])[0];
    let mean_r = r[k_min..].iter().sum::<f64>() / (n - k_min) as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for k in k_min..n {
        let sim = simulated_output(u_states, bi, &a_hat, &b_hat, k);
        ss_res += (r[k] - sim).powi(2);
        ss_tot += (r[k] - mean_r).powi(2);
    }
    let fit_percent = if ss_tot > 0.0 {
        100.0 * (1.0 - (ss_res / ss_tot).sqrt())
    } else {
        0.0
    };

    Ok(CoeFit {
        params,
        fit_percent,
        converged,
        iterations,
        residual_norms,
        pole_reflections: reflections,
        pole_clamps: clamps,
        non_informative: fit_percent < NON_INFORMATIVE_FIT_PERCENT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coe::simulate_response;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_times(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut t = 0.0;
        (0..n)
            .map(|_| {
                let out = t;
                t += rng.gen_range(0.3..1.2);
                out
            })
            .collect()
    }

    fn switching_input(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut level = rng.gen_range(-0.8..0.8f64);
        (0..n)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    level = rng.gen_range(-0.8..0.8);
                }
                level
            })
            .collect()
    }

    #[test]
    fn test_noise_free_recovery_is_essentially_exact() {
        let truth = CoeParams::new(vec![3.0, 2.0], vec![-0.004, -0.002]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let times = sample_times(600, &mut rng);
        let bi = switching_input(600, &mut rng);
        let r = simulate_response(&truth, &times, &bi).unwrap();
        // The normal equations are consistent with the truth at the fixed
        // point, so a tight tolerance drives the error to numerical noise.
        let config = SrivcConfig {
            tol: 1e-10,
            max_iters: 200,
            ..SrivcConfig::default()
        };
        let fit = srivc_fit(&times, &bi, &r, &config).unwrap();
        assert!(fit.converged, "{fit:?}");
        for (got, want) in fit.params.a.iter().zip(&truth.a) {
            assert!((got - want).abs() / want.abs() < 1e-8, "a: {got} vs {want}");
        }
        for (got, want) in fit.params.b.iter().zip(&truth.b) {
            assert!((got - want).abs() / want.abs() < 1e-8, "b: {got} vs {want}");
        }
        assert!(fit.fit_percent > 99.0);
        assert!(!fit.non_informative);
    }

    #[test]
    fn test_noisy_recovery_stays_close() {
        let truth = CoeParams::new(vec![3.0, 2.0], vec![-0.004, -0.002]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 3000;
        let times = sample_times(n, &mut rng);
        let bi = switching_input(n, &mut rng);
        let clean = simulate_response(&truth, &times, &bi).unwrap();
        // Noise at roughly 10 dB SNR.
        let signal_rms =
            (clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
        let noise_rms = signal_rms / 10f64.sqrt();
        let r: Vec<f64> = clean
            .iter()
            .map(|v| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                v + noise_rms * (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let fit = srivc_fit(&times, &bi, &r, &SrivcConfig::default()).unwrap();
        for (got, want) in fit.params.a.iter().zip(&truth.a) {
            assert!(
                (got - want).abs() / want.abs() < 0.25,
                "a: {got} vs {want}"
            );
        }
        for (got, want) in fit.params.b.iter().zip(&truth.b) {
            assert!(
                (got - want).abs() / want.abs() < 0.25,
                "b: {got} vs {want}"
            );
        }
    }

    #[test]
    fn test_pure_noise_output_is_flagged_non_informative() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 800;
        let times = sample_times(n, &mut rng);
        let bi = switching_input(n, &mut rng);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
        let fit = srivc_fit(&times, &bi, &r, &SrivcConfig::default()).unwrap();
        assert!(
            fit.non_informative,
            "fit percent {} should be near zero",
            fit.fit_percent
        );
        assert!(fit.params.is_stable());
    }

    #[test]
    fn test_insufficient_samples_rejected() {
        let times: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let bi = vec![0.1; 30];
        let r = vec![0.0; 30];
        assert!(matches!(
            srivc_fit(&times, &bi, &r, &SrivcConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn test_returned_denominator_is_always_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 400;
        let times = sample_times(n, &mut rng);
        let bi = switching_input(n, &mut rng);
        // Output unrelated to input, wandering: stresses the solver.
        let mut acc = 0.0;
        let r: Vec<f64> = (0..n)
            .map(|_| {
                acc += rng.gen_range(-1e-3..1e-3);
                acc
            })
            .collect();
        match srivc_fit(&times, &bi, &r, &SrivcConfig::default()) {
            Ok(fit) => assert!(fit.params.is_stable()),
            Err(Error::UnstableModel(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn test_stabilize_reflects_right_half_plane_poles() {
        // p^2 - p + 2 has poles 0.5 +- 1.32i.
        let (fixed, reflected, clamped) = stabilize_denominator(&[-1.0, 2.0], 1e6);
        assert!(reflected && !clamped);
        let params = CoeParams::new(fixed, vec![1.0]).unwrap();
        assert!(params.is_stable());
        let (same, reflected, clamped) = stabilize_denominator(&[3.0, 2.0], 1e6);
        assert!(!reflected && !clamped);
        assert_eq!(same, vec![3.0, 2.0]);
    }

    #[test]
    fn test_stabilize_clamps_runaway_poles() {
        // Poles -100 and -200, cap at 50: both pulled onto the cap circle.
        let (fixed, reflected, clamped) = stabilize_denominator(&[300.0, 20_000.0], 50.0);
        assert!(!reflected && clamped);
        let params = CoeParams::new(fixed, vec![1.0]).unwrap();
        for pole in params.poles() {
            assert!(pole.re < 0.0);
            assert!(pole.norm() <= 50.0 + 1e-9);
        }
    }

    #[test]
    fn test_memoryless_data_yields_finite_static_like_fit() {
        // The generating map has no dynamics at all; the estimated poles run
        // toward infinity and must be stopped by the cap, leaving a stable
        // model whose DC gain matches the static one.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 1500;
        let times = sample_times(n, &mut rng);
        let bi = switching_input(n, &mut rng);
        let gain = -2e-3;
        let r: Vec<f64> = bi
            .iter()
            .map(|b| gain * b + 2e-4 * {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let fit = srivc_fit(&times, &bi, &r, &SrivcConfig::default()).unwrap();
        assert!(fit.params.a.iter().all(|v| v.is_finite()));
        assert!(fit.params.is_stable());
        assert!(fit.fit_percent.is_finite());
        assert!(fit.residual_norms.iter().all(|v| v.is_finite()));
        let dc = fit.params.dc_gain();
        assert!(
            (dc - gain).abs() < 0.3 * gain.abs(),
            "dc gain {dc} vs {gain}"
        );
    }

    #[test]
    fn test_monic_square() {
        // (p^2 + 3p + 2)^2 = p^4 + 6p^3 + 13p^2 + 12p + 4.
        assert_eq!(monic_square(&[3.0, 2.0]), vec![6.0, 13.0, 12.0, 4.0]);
    }
}
