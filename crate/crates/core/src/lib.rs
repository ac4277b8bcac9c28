//! Event-time and return forecasting for limit order book data.
//!
//! The library is organised around the pipeline it serves:
//!
//! * [`lobdata`]: snapshot ingestion, mid-price/return/imbalance features,
//!   non-zero-return event extraction, scenario validation, decile statistics.
//! * [`hawkes`]: univariate exponential-kernel self-exciting intensity,
//!   maximum likelihood fitting, thinning simulation, next-event sampling.
//! * [`coe`]: continuous-time output-error model of returns driven by book
//!   imbalance, identified with iterative instrumental variables.
//! * [`predictors`]: the next-event-time predictors compared in backtests.
//! * [`backtest`]: scenario runner, accuracy and trading accounting, Monte
//!   Carlo aggregation, hyperparameter grid search.
//! * [`synth`]: synthetic dataset generation with known ground truth.
//!
//! Times are `f64` seconds throughout (epoch seconds for real data); calendar
//! formats are converted at the CSV boundary.

pub mod backtest;
pub mod coe;
pub mod error;
pub mod hawkes;
pub mod lobdata;
pub mod optim;
pub mod predictors;
pub mod synth;

pub use error::{Error, Result};

/// Splitmix64 step, used to derive independent RNG seeds from a base seed
/// and a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
