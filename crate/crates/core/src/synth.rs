//! Synthetic order-book streams with known ground truth.
//!
//! Every generated dataset carries its own answers: the event times follow a
//! chosen point process, the imbalance path is a smooth bounded AR(1)
//! process, returns come from a known imbalance-to-return model, and each
//! book is shaped so that the price-range imbalance at the configured depth
//! reproduces the ground-truth value exactly. Extracting events from the
//! snapshots therefore recovers the generating series, which is what the
//! estimation and backtest tests check against.

use rand::Rng;

use crate::coe::{simulate_response, CoeParams};
use crate::error::{Error, Result};
use crate::hawkes::{exp_draw, simulate, HawkesParams};
use crate::lobdata::{LobSnapshot, Span};

/// Event-time process.
#[derive(Debug, Clone, PartialEq)]
pub enum TimingModel {
    /// Self-exciting times; `min_gap > 0` clamps each event to at least that
    /// far after its predecessor, which distorts the process slightly.
    Hawkes { params: HawkesParams, min_gap: f64 },
    /// Independent gaps of `min_gap` plus an exponential tail with mean
    /// `mean_extra`.
    Renewal { min_gap: f64, mean_extra: f64 },
}

/// Imbalance-to-return map.
#[derive(Debug, Clone, PartialEq)]
pub enum ReturnModel {
    /// Response of the continuous-time transfer function to the imbalance
    /// path, plus Gaussian noise.
    Coe { params: CoeParams, noise_std: f64 },
    /// Memoryless `R = gain * BI` plus Gaussian noise.
    Linear { gain: f64, noise_std: f64 },
}

/// AR(1) driver for the imbalance path, squashed through tanh so the
/// imbalance stays inside (-0.9, 0.9).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiConfig {
    pub autocorr: f64,
    pub shock_std: f64,
}

impl Default for BiConfig {
    fn default() -> Self {
        Self {
            autocorr: 0.98,
            shock_std: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub t_start: f64,
    pub duration_secs: f64,
    pub timing: TimingModel,
    pub returns: ReturnModel,
    pub bi: BiConfig,
    /// Depth at which the book reproduces the ground-truth imbalance.
    pub depth: usize,
    /// Book levels emitted per side, at least `depth`.
    pub levels: usize,
    /// Price-range scale of the book; also the bid-ask spread.
    pub tick: f64,
    pub base_price: f64,
    /// Unchanged-book snapshots inserted between consecutive events,
    /// mimicking feed records that repeat the previous price.
    pub repeats_per_gap: usize,
}

impl SynthConfig {
    /// Renewal timing and linear returns with defaults that pass the
    /// standard validation settings.
    pub fn renewal_linear(duration_secs: f64) -> Self {
        Self {
            t_start: 0.0,
            duration_secs,
            timing: TimingModel::Renewal {
                min_gap: 1.0,
                mean_extra: 0.1,
            },
            returns: ReturnModel::Linear {
                gain: -2e-3,
                noise_std: 2e-4,
            },
            bi: BiConfig::default(),
            depth: 8,
            levels: 8,
            tick: 0.1,
            base_price: 100.0,
            repeats_per_gap: 0,
        }
    }
}

/// Generated stream plus its generating series.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub snapshots: Vec<LobSnapshot>,
    pub event_times: Vec<f64>,
    /// Ground-truth imbalance at each event.
    pub bi: Vec<f64>,
    /// Forward return realized between consecutive events; one entry
    /// shorter than `event_times`.
    pub returns: Vec<f64>,
}

/// Standard normal via Box-Muller.
pub(crate) fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

fn event_times<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<Vec<f64>> {
    let span = Span::new(cfg.t_start, cfg.t_start + cfg.duration_secs);
    match &cfg.timing {
        TimingModel::Hawkes { params, min_gap } => {
            let raw = simulate(params, span, rng)?;
            let mut out: Vec<f64> = Vec::with_capacity(raw.len());
            for t in raw {
                let clamped = match out.last() {
                    Some(prev) => t.max(prev + min_gap),
                    None => t,
                };
                if clamped <= span.end {
                    out.push(clamped);
                }
            }
            Ok(out)
        }
        TimingModel::Renewal { min_gap, mean_extra } => {
            if *min_gap <= 0.0 && *mean_extra <= 0.0 {
                return Err(Error::Domain(
                    "renewal timing needs a positive gap component".into(),
                ));
            }
            let mut out = Vec::new();
            let mut t = cfg.t_start;
            loop {
                let extra = if *mean_extra > 0.0 {
                    exp_draw(rng, 1.0 / mean_extra)
                } else {
                    0.0
                };
                t += min_gap + extra;
                if t > span.end {
                    break;
                }
                out.push(t);
            }
            Ok(out)
        }
    }
}

fn bi_path<R: Rng>(cfg: &BiConfig, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    // Negative autocorrelation gives a mean-reverting driver; stationarity
    // needs |autocorr| < 1 either way.
    if !(-1.0..1.0).contains(&cfg.autocorr) || cfg.shock_std <= 0.0 {
        return Err(Error::Domain(format!(
            "imbalance driver needs autocorr in (-1,1) and positive shock, got {cfg:?}"
        )));
    }
    // Start from the stationary distribution of the driver.
    let stationary_std = cfg.shock_std / (1.0 - cfg.autocorr * cfg.autocorr).sqrt();
    let mut s = stationary_std * gauss(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(0.9 * s.tanh());
        s = cfg.autocorr * s + cfg.shock_std * gauss(rng);
    }
    Ok(out)
}

fn returns_path<R: Rng>(
    model: &ReturnModel,
    times: &[f64],
    bi: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let clean = match model {
        ReturnModel::Coe { params, .. } => simulate_response(params, times, bi)?,
        ReturnModel::Linear { gain, .. } => bi.iter().map(|b| gain * b).collect(),
    };
    let noise_std = match model {
        ReturnModel::Coe { noise_std, .. } | ReturnModel::Linear { noise_std, .. } => *noise_std,
    };
    if noise_std < 0.0 {
        return Err(Error::Domain(format!(
            "noise level must be non-negative, got {noise_std}"
        )));
    }
    // Forward returns: the value at event k is realized over (t_k, t_{k+1}],
    // so the last event carries none.
    Ok(clean[..times.len() - 1]
        .iter()
        .map(|r| {
            let v = r + noise_std * gauss(rng);
            // Zero returns would merge adjacent mid prices and drop the
            // event on extraction; nudge them off zero.
            if v == 0.0 {
                1e-9
            } else {
                v
            }
        })
        .collect())
}

/// One book with the given mid and exact price-range imbalance at `depth`.
fn build_book(
    time: f64,
    mid: f64,
    bi: f64,
    depth: usize,
    levels: usize,
    tick: f64,
) -> Result<LobSnapshot> {
    // Total price range split so that (d_bid - d_ask)/(d_bid + d_ask) = bi.
    let total = tick * 2.0 * depth as f64;
    let d_bid = total * (1.0 + bi) / 2.0;
    let d_ask = total * (1.0 - bi) / 2.0;
    let ask1 = mid + tick / 2.0;
    let bid1 = mid - tick / 2.0;
    let bid_step = d_bid / (depth - 1) as f64;
    let ask_step = d_ask / (depth - 1) as f64;
    let mut ask_prices = Vec::with_capacity(levels);
    let mut bid_prices = Vec::with_capacity(levels);
    for j in 0..levels {
        ask_prices.push(ask1 + ask_step * j as f64);
        bid_prices.push(bid1 - bid_step * j as f64);
    }
    let sizes: Vec<f64> = (0..levels).map(|j| 1.0 + 0.1 * j as f64).collect();
    LobSnapshot::new(time, ask_prices, sizes.clone(), bid_prices, sizes)
}

pub fn generate<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthData> {
    if cfg.depth < 2 {
        return Err(Error::Domain(
            "book construction needs depth of at least 2".into(),
        ));
    }
    if cfg.levels < cfg.depth {
        return Err(Error::Domain(format!(
            "levels {} below imbalance depth {}",
            cfg.levels, cfg.depth
        )));
    }
    if cfg.tick <= 0.0 || cfg.base_price <= 0.0 {
        return Err(Error::Domain(
            "tick and base price must be positive".into(),
        ));
    }

    let times = event_times(cfg, rng)?;
    if times.len() < 2 {
        return Err(Error::InsufficientData {
            what: "synthetic events",
            need: 2,
            got: times.len(),
        });
    }
    let bi = bi_path(&cfg.bi, times.len(), rng)?;
    let returns = returns_path(&cfg.returns, &times, &bi, rng)?;

    let mut prices = Vec::with_capacity(times.len());
    prices.push(cfg.base_price);
    for r in &returns {
        let next = prices.last().unwrap() * (1.0 + r);
        if next <= 0.0 {
            return Err(Error::Domain(
                "return path drove the price non-positive".into(),
            ));
        }
        prices.push(next);
    }

    let mut snapshots = Vec::new();
    for k in 0..times.len() {
        let book = build_book(times[k], prices[k], bi[k], cfg.depth, cfg.levels, cfg.tick)?;
        if k > 0 && cfg.repeats_per_gap > 0 {
            // Repeats carry the previous book forward at intermediate times.
            let prev = snapshots.last().cloned().unwrap_or_else(|| book.clone());
            insert_repeats(&mut snapshots, &prev, times[k - 1], times[k], cfg.repeats_per_gap);
        }
        snapshots.push(book);
    }

    Ok(SynthData {
        snapshots,
        event_times: times,
        bi,
        returns,
    })
}

fn insert_repeats(
    out: &mut Vec<LobSnapshot>,
    prev: &LobSnapshot,
    t_from: f64,
    t_to: f64,
    count: usize,
) {
    for j in 1..=count {
        let t = t_from + (t_to - t_from) * j as f64 / (count + 1) as f64;
        let mut copy = prev.clone();
        copy.time = t;
        out.push(copy);
    }
}
