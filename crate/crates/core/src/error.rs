//! Library error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Backtest pipeline stage, used to tag scenario failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validation,
    HawkesFit,
    Forecast,
    CoeFit,
    ReturnPrediction,
    Accounting,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Validation => "validation",
            Stage::HawkesFit => "hawkes-fit",
            Stage::Forecast => "forecast",
            Stage::CoeFit => "coe-fit",
            Stage::ReturnPrediction => "return-prediction",
            Stage::Accounting => "accounting",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Input file cannot be understood at all (missing columns, bad header).
    #[error("input format: {0}")]
    Format(String),

    /// A specific data row failed to parse.
    #[error("row {line}: {msg}")]
    Row { line: usize, msg: String },

    /// A numeric argument is outside its domain.
    #[error("domain: {0}")]
    Domain(String),

    /// Too few observations for the requested operation.
    #[error("insufficient data for {what}: need {need}, got {got}")]
    InsufficientData {
        what: &'static str,
        need: usize,
        got: usize,
    },

    /// Fewer than two retained events survive extraction.
    #[error("no usable event series: fewer than two non-zero-return events")]
    EmptySeries,

    /// Caller broke an ordering or range precondition.
    #[error("contract: {0}")]
    Contract(String),

    /// Identified model has no stable representative.
    #[error("unstable model: {0}")]
    UnstableModel(String),

    /// Every grid point failed during hyperparameter tuning.
    #[error("tuning failed: no grid point produced a usable run")]
    TuningFailed,

    /// A backtest scenario failed at a tagged stage.
    #[error("scenario {scenario_id} failed at {stage}: {source}")]
    Scenario {
        scenario_id: usize,
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_stage(self, scenario_id: usize, stage: Stage) -> Error {
        Error::Scenario {
            scenario_id,
            stage,
            source: Box::new(self),
        }
    }
}
