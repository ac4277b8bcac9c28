//! Limit order book snapshots and the event series derived from them.
//!
//! A snapshot is one row of book state: best-first ask and bid ladders at a
//! timestamp. The supervised objects downstream care about are the
//! non-zero-return events extracted from consecutive snapshots, each carrying
//! its mid-price, forward return and base imbalance.

mod io;

pub use io::{parse_lob_csv, write_lob_csv, IngestReport};

use crate::error::{Error, Result};

/// One book snapshot. Level arrays are best-first: `ask_prices[0]` is the
/// lowest ask, `bid_prices[0]` the highest bid.
#[derive(Debug, Clone, PartialEq)]
pub struct LobSnapshot {
    pub time: f64,
    pub ask_prices: Vec<f64>,
    pub ask_sizes: Vec<f64>,
    pub bid_prices: Vec<f64>,
    pub bid_sizes: Vec<f64>,
}

impl LobSnapshot {
    /// Builds a snapshot, rejecting anything that is not a well-formed
    /// uncrossed book: positive finite prices and sizes, strictly increasing
    /// asks, strictly decreasing bids, best ask above best bid.
    pub fn new(
        time: f64,
        ask_prices: Vec<f64>,
        ask_sizes: Vec<f64>,
        bid_prices: Vec<f64>,
        bid_sizes: Vec<f64>,
    ) -> Result<Self> {
        let levels = ask_prices.len();
        if levels == 0 {
            return Err(Error::Domain("snapshot has no levels".into()));
        }
        if ask_sizes.len() != levels || bid_prices.len() != levels || bid_sizes.len() != levels {
            return Err(Error::Domain("level arrays have mismatched lengths".into()));
        }
        if !time.is_finite() {
            return Err(Error::Domain("non-finite timestamp".into()));
        }
        for v in ask_prices
            .iter()
            .chain(&bid_prices)
            .chain(&ask_sizes)
            .chain(&bid_sizes)
        {
            if !v.is_finite() || *v <= 0.0 {
                return Err(Error::Domain("prices and sizes must be positive".into()));
            }
        }
        if ask_prices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("ask prices not strictly increasing".into()));
        }
        if bid_prices.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain("bid prices not strictly decreasing".into()));
        }
        if ask_prices[0] <= bid_prices[0] {
            return Err(Error::Domain("crossed book".into()));
        }
        Ok(Self {
            time,
            ask_prices,
            ask_sizes,
            bid_prices,
            bid_sizes,
        })
    }

    pub fn levels(&self) -> usize {
        self.ask_prices.len()
    }

    /// Midpoint of the best quotes.
    pub fn mid_price(&self) -> f64 {
        0.5 * (self.ask_prices[0] + self.bid_prices[0])
    }

    /// Price-range base imbalance over the first `depth` levels:
    /// `(D_bid - D_ask) / (D_bid + D_ask)` with `D_bid` the bid-side price
    /// range and `D_ask` the ask-side price range. Returns the value and a
    /// degeneracy flag; a zero denominator yields `(0.0, true)`.
    pub fn base_imbalance(&self, depth: usize) -> Result<(f64, bool)> {
        if depth == 0 {
            return Err(Error::Domain("imbalance depth must be at least 1".into()));
        }
        if depth > self.levels() {
            return Err(Error::Domain(format!(
                "imbalance depth {} exceeds available levels {}",
                depth,
                self.levels()
            )));
        }
        let d_bid = self.bid_prices[0] - self.bid_prices[depth - 1];
        let d_ask = self.ask_prices[depth - 1] - self.ask_prices[0];
        let denom = d_bid + d_ask;
        if denom == 0.0 {
            return Ok((0.0, true));
        }
        Ok(((d_bid - d_ask) / denom, false))
    }
}

/// Forward simple returns: `r[k] = (p[k+1] - p[k]) / p[k]`. One entry shorter
/// than the input; the last price has no forward return.
pub fn compute_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData {
            what: "returns",
            need: 2,
            got: prices.len(),
        });
    }
    if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::Domain("prices must be positive and finite".into()));
    }
    Ok(prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// Events with non-zero forward returns, aligned across all arrays. Entry `k`
/// holds the event time, the mid-price at that event, the return realised
/// between this event and the next retained one, and the base imbalance of
/// the book at this event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSeries {
    pub times: Vec<f64>,
    pub mids: Vec<f64>,
    pub returns: Vec<f64>,
    pub imbalances: Vec<f64>,
    /// Events whose imbalance denominator degenerated to zero.
    pub degenerate_imbalances: usize,
}

impl EventSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Event times within `[start, end]` as a sub-slice.
    pub fn times_in(&self, start: f64, end: f64) -> &[f64] {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t <= end);
        &self.times[lo..hi]
    }

    /// Index range of events within `[start, end]`.
    pub fn range_in(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t <= end);
        lo..hi
    }

    /// Index of the most recent event at or before `t`, if any.
    pub fn last_event_at_or_before(&self, t: f64) -> Option<usize> {
        let n = self.times.partition_point(|&x| x <= t);
        n.checked_sub(1)
    }
}

/// Collapses snapshots onto events at which the mid-price actually moved.
///
/// The first snapshot is always retained; each later snapshot is retained only
/// if its mid differs from the previously retained mid. The returned series
/// covers retained snapshots except the last, which exists only as the price
/// endpoint of the final return.
pub fn extract_events(snapshots: &[LobSnapshot], depth: usize) -> Result<EventSeries> {
    if snapshots.len() < 3 {
        return Err(Error::InsufficientData {
            what: "event extraction",
            need: 3,
            got: snapshots.len(),
        });
    }
    let mut retained: Vec<usize> = vec![0];
    let mut last_mid = snapshots[0].mid_price();
    for (i, snap) in snapshots.iter().enumerate().skip(1) {
        let mid = snap.mid_price();
        if mid != last_mid {
            retained.push(i);
            last_mid = mid;
        }
    }
    if retained.len() < 2 {
        return Err(Error::EmptySeries);
    }

    let n = retained.len() - 1;
    let mut times = Vec::with_capacity(n);
    let mut mids = Vec::with_capacity(n);
    let mut returns = Vec::with_capacity(n);
    let mut imbalances = Vec::with_capacity(n);
    let mut degenerate = 0;
    for k in 0..n {
        let snap = &snapshots[retained[k]];
        let next_mid = snapshots[retained[k + 1]].mid_price();
        let mid = snap.mid_price();
        let (bi, is_degenerate) = snap.base_imbalance(depth)?;
        if is_degenerate {
            degenerate += 1;
        }
        times.push(snap.time);
        mids.push(mid);
        returns.push((next_mid - mid) / mid);
        imbalances.push(bi);
    }
    Ok(EventSeries {
        times,
        mids,
        returns,
        imbalances,
        degenerate_imbalances: degenerate,
    })
}

/// Half-open time spans used by scenario windows, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// One backtest scenario anchored at forecast start `t0`: the two training
/// spans end at `t0`, the simulation span starts there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioWindow {
    pub t0: f64,
    pub hawkes_train: Span,
    pub coe_train: Span,
    pub sim: Span,
}

/// Data-quality limits a scenario must satisfy before it is backtested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSettings {
    /// Smallest admissible inter-event gap in the sim span, seconds. Doubles
    /// as the event-time resolution of the dataset.
    pub min_gap_secs: f64,
    /// Upper bound on the mean of per-minute maximum inter-event gaps.
    pub mean_max_gap_secs: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            min_gap_secs: 1.0,
            mean_max_gap_secs: 2.2,
        }
    }
}

/// Outcome of scenario validation. Failures are entries, not errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub sim_event_count: usize,
    pub min_gap: Option<f64>,
    pub min_gap_ok: bool,
    pub mean_max_gap: Option<f64>,
    pub mean_max_gap_ok: bool,
    pub nonzero_returns_ok: bool,
    pub hawkes_span_covered: bool,
    pub coe_span_covered: bool,
    pub sim_span_covered: bool,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.min_gap_ok
            && self.mean_max_gap_ok
            && self.nonzero_returns_ok
            && self.hawkes_span_covered
            && self.coe_span_covered
            && self.sim_span_covered
    }
}

/// Mean over non-overlapping 60 s sub-windows of the largest inter-event gap
/// touching each. A gap is charged to every sub-window its interval
/// intersects, so a hole straddling a boundary counts on both sides; a
/// sub-window no gap touches contributes its full length.
fn mean_per_minute_max_gap(times: &[f64], span: Span) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let mut sub_start = span.start;
    let mut maxima = Vec::new();
    while sub_start < span.end - 1e-9 {
        let sub_end = (sub_start + 60.0).min(span.end);
        let mut max_gap: Option<f64> = None;
        for w in times.windows(2) {
            if w[1] > sub_start && w[0] < sub_end {
                let g = w[1] - w[0];
                max_gap = Some(max_gap.map_or(g, |m| m.max(g)));
            }
        }
        maxima.push(max_gap.unwrap_or(sub_end - sub_start));
        sub_start = sub_end;
    }
    if maxima.is_empty() {
        None
    } else {
        Some(maxima.iter().sum::<f64>() / maxima.len() as f64)
    }
}

/// Checks a scenario window against the data-quality limits. Span coverage
/// requires at least two events in each of the three spans.
pub fn validate_scenario(
    series: &EventSeries,
    window: &ScenarioWindow,
    settings: &ValidationSettings,
) -> ValidationReport {
    let sim_times = series.times_in(window.sim.start, window.sim.end);
    let sim_range = series.range_in(window.sim.start, window.sim.end);

    let min_gap = if sim_times.len() >= 2 {
        Some(
            sim_times
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min),
        )
    } else {
        None
    };
    let mean_max_gap = mean_per_minute_max_gap(sim_times, window.sim);

    let nonzero_returns_ok = series.returns[sim_range].iter().all(|r| *r != 0.0);

    let covered = |span: Span| series.times_in(span.start, span.end).len() >= 2;

    ValidationReport {
        sim_event_count: sim_times.len(),
        min_gap,
        min_gap_ok: min_gap.is_some_and(|g| g >= settings.min_gap_secs),
        mean_max_gap,
        mean_max_gap_ok: mean_max_gap.is_some_and(|g| g <= settings.mean_max_gap_secs),
        nonzero_returns_ok,
        hawkes_span_covered: covered(window.hawkes_train),
        coe_span_covered: covered(window.coe_train),
        sim_span_covered: covered(window.sim),
    }
}

/// Per-decile means and their correlation across deciles.
#[derive(Debug, Clone, PartialEq)]
pub struct DecileStats {
    pub mean_imbalance: Vec<f64>,
    pub mean_return: Vec<f64>,
    pub correlation: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain(
            "zero variance in decile means, correlation undefined".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Sorts events into ten deciles by return, averages imbalance and return
/// within each, and correlates the ten pairs of decile means.
pub fn decile_correlation(series: &EventSeries) -> Result<DecileStats> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InsufficientData {
            what: "decile correlation",
            need: 10,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| series.returns[a].total_cmp(&series.returns[b]));

    let mut mean_imbalance = Vec::with_capacity(10);
    let mut mean_return = Vec::with_capacity(10);
    let base = n / 10;
    let extra = n % 10;
    let mut start = 0;
    for d in 0..10 {
        let size = base + usize::from(d < extra);
        let chunk = &order[start..start + size];
        start += size;
        let bi = chunk.iter().map(|&i| series.imbalances[i]).sum::<f64>() / size as f64;
        let r = chunk.iter().map(|&i| series.returns[i]).sum::<f64>() / size as f64;
        mean_imbalance.push(bi);
        mean_return.push(r);
    }
    let correlation = pearson(&mean_imbalance, &mean_return)?;
    Ok(DecileStats {
        mean_imbalance,
        mean_return,
        correlation,
    })
}

/// Daily open/high/low/close of the mid-price. `day` counts whole days since
/// the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcRow {
    pub day: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

pub fn daily_ohlc(times: &[f64], mids: &[f64]) -> Vec<OhlcRow> {
    let mut rows: Vec<OhlcRow> = Vec::new();
    for (&t, &m) in times.iter().zip(mids) {
        let day = t.div_euclid(86_400.0) as i64;
        match rows.last_mut() {
            Some(row) if row.day == day => {
                row.high = row.high.max(m);
                row.low = row.low.min(m);
                row.close = m;
            }
            _ => rows.push(OhlcRow {
                day,
                open: m,
                high: m,
                low: m,
                close: m,
            }),
        }
    }
    rows
}
