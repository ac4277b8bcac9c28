//! Run configuration resolved in three layers: built-in defaults, then the
//! config file, then command-line flags.

use std::path::{Path, PathBuf};

use lobcast::backtest::HyperParams;
use lobcast::hawkes::ForecastConfig;
use lobcast::lobdata::ValidationSettings;
use lobcast::predictors::PredictorKind;

use crate::{CliError, Common};

/// Names the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "LOBCAST_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub levels: usize,
    pub depth: usize,
    pub hp: HyperParams,
    pub settings: ValidationSettings,
    pub predictor: PredictorKind,
    pub seed: u64,
    pub t0: Option<f64>,
    pub out: PathBuf,
    pub format: TableFormat,
    /// Scenario count for the Monte Carlo command.
    pub scenarios: usize,
    /// Grid file for the tuning command.
    pub grid: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            levels: 8,
            depth: 8,
            hp: HyperParams::default(),
            settings: ValidationSettings::default(),
            predictor: PredictorKind::Hawkes(ForecastConfig::default()),
            seed: 42,
            t0: None,
            out: PathBuf::from("out"),
            format: TableFormat::Csv,
            scenarios: 50,
            grid: None,
        }
    }
}

impl RunConfig {
    pub fn resolve(flags: &Common) -> Result<Self, CliError> {
        let mut rc = RunConfig::default();

        let file = flags
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        if let Some(path) = file {
            rc.apply_file(&path)?;
        }

        if let Some(v) = &flags.data {
            rc.data = Some(v.clone());
        }
        if let Some(v) = &flags.predictor {
            rc.predictor = parse_predictor(v)?;
        }
        if let Some(v) = flags.seed {
            rc.seed = v;
        }
        if let Some(v) = flags.t0 {
            rc.t0 = Some(v);
        }
        if let Some(v) = &flags.out {
            rc.out = v.clone();
        }
        if let Some(v) = &flags.format {
            rc.format = parse_format(v)?;
        }
        if let Some(v) = flags.levels {
            rc.levels = v;
        }
        if let Some(v) = flags.depth {
            rc.depth = v;
        }

        rc.validate()?;
        Ok(rc)
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    idx + 1
                ))
            })?;
            self.apply_key(key.trim(), value.trim())
                .map_err(|e| match e {
                    CliError::Usage(msg) => {
                        CliError::Usage(format!("config line {}: {msg}", idx + 1))
                    }
                    other => other,
                })?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "levels" => self.levels = parse_num(key, value)?,
            "depth" => self.depth = parse_num(key, value)?,
            "predictor" => self.predictor = parse_predictor(value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "t0" => self.t0 = Some(parse_num(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "format" => self.format = parse_format(value)?,
            "scenarios" => self.scenarios = parse_num(key, value)?,
            "grid" => self.grid = Some(PathBuf::from(value)),
            "hawkes_train_mins" => self.hp.hawkes_train_mins = parse_num(key, value)?,
            "coe_train_mins" => self.hp.coe_train_mins = parse_num(key, value)?,
            "warm_up_mins" => self.hp.warm_up_mins = parse_num(key, value)?,
            "delta_t_secs" => self.hp.delta_t_secs = parse_num(key, value)?,
            "sim_mins" => self.hp.sim_mins = parse_num(key, value)?,
            "min_gap_secs" => self.settings.min_gap_secs = parse_num(key, value)?,
            "mean_max_gap_secs" => self.settings.mean_max_gap_secs = parse_num(key, value)?,
            other => {
                return Err(CliError::Usage(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        self.hp
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.depth == 0 {
            return Err(CliError::Usage("depth must be at least 1".into()));
        }
        if self.levels < self.depth {
            return Err(CliError::Usage(format!(
                "levels ({}) must be at least the imbalance depth ({})",
                self.levels, self.depth
            )));
        }
        if self.scenarios == 0 {
            return Err(CliError::Usage("scenarios must be at least 1".into()));
        }
        let s = &self.settings;
        if !(s.min_gap_secs >= 0.0) || !s.min_gap_secs.is_finite() {
            return Err(CliError::Usage(format!(
                "min_gap_secs must be non-negative, got {}",
                s.min_gap_secs
            )));
        }
        if !(s.mean_max_gap_secs > 0.0) {
            return Err(CliError::Usage(format!(
                "mean_max_gap_secs must be positive, got {}",
                s.mean_max_gap_secs
            )));
        }
        if let Some(data) = &self.data {
            if !data.exists() {
                return Err(CliError::Core(lobcast::Error::Format(format!(
                    "data file {} does not exist",
                    data.display()
                ))));
            }
        }
        Ok(())
    }

    /// The data path, required by every command that reads a dataset.
    pub fn require_data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("--data is required for this command".into()))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("{key}: cannot parse `{value}`: {e}")))
}

pub fn parse_predictor(name: &str) -> Result<PredictorKind, CliError> {
    match name {
        "oracle" => Ok(PredictorKind::Oracle),
        "naive" => Ok(PredictorKind::Naive),
        "ma" => Ok(PredictorKind::moving_average()),
        "hawkes" => Ok(PredictorKind::Hawkes(ForecastConfig::default())),
        other => Err(CliError::Usage(format!(
            "unknown predictor `{other}`; expected oracle, naive, ma, or hawkes"
        ))),
    }
}

fn parse_format(name: &str) -> Result<TableFormat, CliError> {
    match name {
        "csv" => Ok(TableFormat::Csv),
        "json" => Ok(TableFormat::Json),
        other => Err(CliError::Usage(format!(
            "unknown format `{other}`; expected csv or json"
        ))),
    }
}
