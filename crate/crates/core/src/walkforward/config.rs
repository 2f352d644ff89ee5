//! Experiment configuration file (TOML).
//!
//! ```toml
//! [experiment]
//! start = "2001-01-02"       # first day of data used (universe lookback begins here)
//! end = "2015-12-31"         # last test day
//! learners = ["neural", "logistic", "random"]
//! seed = 7
//! split_date = "2008-09-30"  # early/late boundary; defaults to 2008-09-30
//! score = "day_mean"         # or "pooled"
//! workers = 0                # 0 = one per core
//!
//! [universe]
//! size = 500
//! mode = "rolling"           # or "fixed"
//! window_months = 12
//!
//! [grid]
//! end_x = [-5, -10, -30]
//! bps = [2, 5, 10, 25]
//!
//! [strategy]
//! pnl_relative = false
//! cost_bps_per_side = 0.0
//!
//! [data]
//! early_close = ["2005-11-25"]   # sessions skipped everywhere
//!
//! [learners.neural]
//! hidden = [180, 20]
//! learning_rate = 1e-3
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! batch_size = 256
//! max_epochs = 200
//! patience = 5
//! min_delta = 1e-4
//! standardize = true
//!
//! [learners.logistic]
//! lambda = 1e-3
//! solver = "newton"          # or "adam"
//! learning_rate = 1e-2
//! tolerance = 1e-6
//! max_iters = 1000
//! standardize = true
//! ```
//!
//! Dates are quoted `YYYY-MM-DD` strings. Every section but `[experiment]`
//! may be omitted; unknown keys are rejected.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{Hyperparams, BPS_GRID, END_X_GRID};
use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, LearnerKind};
use crate::strategy::StrategyConfig;
use crate::universe::UniverseMode;

pub fn default_split_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2008, 9, 30).expect("valid date")
}

/// How a grid cell's validation days are summarized into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    /// Mean of daily trade precisions over days with trades.
    #[default]
    DayMean,
    /// Correct trades over all trades in the month.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default = "all_learners")]
    pub learners: Vec<LearnerKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split_date: Option<NaiveDate>,
    #[serde(default)]
    pub score: ScoreMethod,
    #[serde(default)]
    pub workers: usize,
}

fn all_learners() -> Vec<LearnerKind> {
    LearnerKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseSection {
    pub size: usize,
    pub mode: UniverseMode,
    pub window_months: u32,
}

impl Default for UniverseSection {
    fn default() -> Self {
        UniverseSection {
            size: 500,
            mode: UniverseMode::Rolling,
            window_months: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub end_x: Vec<i32>,
    pub bps: Vec<u32>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            end_x: END_X_GRID.to_vec(),
            bps: BPS_GRID.to_vec(),
        }
    }
}

impl GridSection {
    /// Cells in `end_x`-major order.
    pub fn cells(&self) -> Result<Vec<Hyperparams>> {
        let mut out = Vec::with_capacity(self.end_x.len() * self.bps.len());
        for &e in &self.end_x {
            for &b in &self.bps {
                out.push(Hyperparams::new(e, b).map_err(|e| Error::Config(format!("grid: {e}")))?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub early_close: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub universe: UniverseSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub learners: LearnerConfig,
}

impl ExperimentConfig {
    /// A config with defaults everywhere but the date range.
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        ExperimentConfig {
            experiment: ExperimentSection {
                start,
                end,
                learners: all_learners(),
                seed: 0,
                split_date: None,
                score: ScoreMethod::DayMean,
                workers: 0,
            },
            universe: UniverseSection::default(),
            grid: GridSection::default(),
            strategy: StrategyConfig::default(),
            data: DataSection::default(),
            learners: LearnerConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn split_date(&self) -> NaiveDate {
        self.experiment.split_date.unwrap_or_else(default_split_date)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.end < e.start {
            return Err(Error::Config("experiment.end precedes experiment.start".into()));
        }
        if e.learners.is_empty() {
            return Err(Error::Config("experiment.learners is empty".into()));
        }
        let mut seen = e.learners.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != e.learners.len() {
            return Err(Error::Config("experiment.learners lists a learner twice".into()));
        }
        if self.universe.size == 0 {
            return Err(Error::Config("universe.size must be positive".into()));
        }
        if self.universe.window_months == 0 {
            return Err(Error::Config("universe.window_months must be positive".into()));
        }
        if self.grid.end_x.is_empty() || self.grid.bps.is_empty() {
            return Err(Error::Config("grid.end_x and grid.bps must be nonempty".into()));
        }
        self.grid.cells()?;
        if !(self.strategy.cost_bps_per_side >= 0.0) {
            return Err(Error::Config("strategy.cost_bps_per_side must be >= 0".into()));
        }
        self.learners.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("[experiment]\nstart = \"2001-01-02\"\nend = \"2004-12-31\"\n").unwrap();
        assert_eq!(cfg.split_date(), default_split_date());
        assert_eq!(cfg.experiment.learners, LearnerKind::ALL);
        assert_eq!(cfg.grid.cells().unwrap().len(), 12);
        assert_eq!(cfg.learners.neural.batch_size, 256);
        assert_eq!(cfg.universe.size, 500);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::new(
            NaiveDate::from_ymd_opt(2001, 1, 2).unwrap(),
            NaiveDate::from_ymd_opt(2003, 6, 30).unwrap(),
        );
        cfg.experiment.split_date = Some(NaiveDate::from_ymd_opt(2002, 12, 31).unwrap());
        cfg.learners.logistic.lambda = 0.5;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let err = ExperimentConfig::from_toml("[experiment]\nstart = \"2001-01-02\"\nend = \"2004-12-31\"\nbogus = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = ExperimentConfig::from_toml(
            "[experiment]\nstart = \"2001-01-02\"\nend = \"2004-12-31\"\n[learners.neural]\nbatch_size = 0\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("batch_size"), "{err}");
        let err = ExperimentConfig::from_toml("[experiment]\nstart = \"2001-01-02\"\nend = \"2000-12-31\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("experiment.end"), "{err}");
    }
}
