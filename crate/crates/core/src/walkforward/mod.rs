//! Monthly walk-forward protocol.
//!
//! For each test month `T`: the validation month is `T − 1`, the training
//! period is the twelve months `T − 13 ..= T − 2`, and the twelve months
//! before that only feed the universe ranking. Every grid cell trains an Up
//! and a Down model on the training period, is scored by trade precision over
//! the validation month, and the best cell trades the test month.

pub mod config;
mod manifest;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use chrono::{Datelike, NaiveDate};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{default_split_date, ExperimentConfig, ScoreMethod};
pub use manifest::manifest_json;

use crate::bars::BarSource;
use crate::calendar::{Month, TradingCalendar};
use crate::dataset::{last_observed_minute, DayPanel, Direction, FeatureSet, Hyperparams};
use crate::error::{Error, Result};
use crate::learners::{self, Examples, LearnerKind, TrainedClassifier};
use crate::seed::derive_seed;
use crate::strategy::{allocate, decisions_for_day, realize, DailyResult, Portfolio};
use crate::universe::{DollarVolumeIndex, UniverseMode, UniverseSelector};

/// Months of data needed before the first test month.
pub const HISTORY_MONTHS: i64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PeriodLayout {
    pub test: Month,
    pub validation: Month,
    /// First and last training month, inclusive.
    pub training: [Month; 2],
    /// First and last month of the universe-only lookback, inclusive.
    pub universe_lookback: [Month; 2],
}

impl PeriodLayout {
    pub fn training_months(&self) -> Vec<Month> {
        months_between(self.training[0], self.training[1])
    }
}

fn months_between(first: Month, last: Month) -> Vec<Month> {
    (0..=first.months_until(last)).map(|i| first.offset(i)).collect()
}

pub fn layout_periods(start: Month, test: Month) -> Result<PeriodLayout> {
    let gap = start.months_until(test);
    if gap < HISTORY_MONTHS {
        return Err(Error::InsufficientHistory(format!(
            "test month {test} is {gap} months after start {start}; need at least {HISTORY_MONTHS}"
        )));
    }
    Ok(PeriodLayout {
        test,
        validation: test.pred(),
        training: [test.offset(-13), test.offset(-2)],
        universe_lookback: [test.offset(-25), test.offset(-14)],
    })
}

/// Validation-month trading record of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ValidationScore {
    pub score: f64,
    pub days: usize,
    pub traded_days: usize,
    pub trades: usize,
    pub hits: usize,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub hyperparams: Hyperparams,
    pub up: TrainedClassifier,
    pub down: TrainedClassifier,
    /// Why a direction fell back to the no-trade model, if it did.
    pub fallbacks: [Option<String>; 2],
    pub validation: ValidationScore,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<CellOutcome>,
    pub selected: usize,
    /// No cell traded on any validation day.
    pub degenerate: bool,
}

impl GridOutcome {
    pub fn selected_cell(&self) -> &CellOutcome {
        &self.cells[self.selected]
    }
}

/// Index of the best-scoring cell; ties go to the larger threshold, then the
/// smaller `|end_x|`.
pub fn select_cell(cells: &[(Hyperparams, f64)]) -> Option<usize> {
    (0..cells.len()).max_by(|&a, &b| {
        let (ha, sa) = cells[a];
        let (hb, sb) = cells[b];
        sa.total_cmp(&sb)
            .then(ha.bps.cmp(&hb.bps))
            .then(hb.end_x.unsigned_abs().cmp(&ha.end_x.unsigned_abs()))
    })
}

/// Per-cell summary kept after the month's models are dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub seed: u64,
    pub epochs: u32,
    pub loss: f64,
    pub train_rows: u64,
    pub positive_rate: f64,
    pub fallback: Option<String>,
}

impl ModelSummary {
    fn of(model: &TrainedClassifier, fallback: &Option<String>) -> Self {
        ModelSummary {
            seed: model.seed,
            epochs: model.meta.epochs,
            loss: model.meta.loss,
            train_rows: model.meta.train_rows,
            positive_rate: model.meta.positive_rate,
            fallback: fallback.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub hyperparams: Hyperparams,
    pub validation: ValidationScore,
    pub up: ModelSummary,
    pub down: ModelSummary,
}

#[derive(Debug, Clone)]
pub struct MonthRecord {
    pub kind: LearnerKind,
    pub layout: PeriodLayout,
    pub selected: Hyperparams,
    pub degenerate: bool,
    pub cells: Vec<CellSummary>,
    pub up: TrainedClassifier,
    pub down: TrainedClassifier,
    pub test_days: usize,
}

#[derive(Debug, Clone)]
pub struct LearnerRun {
    pub kind: LearnerKind,
    pub months: Vec<MonthRecord>,
    pub days: Vec<DailyResult>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub runs: Vec<LearnerRun>,
}

impl ExperimentResult {
    pub fn run(&self, kind: LearnerKind) -> Option<&LearnerRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }
}

type PanelKey = (NaiveDate, NaiveDate);

/// Walk-forward driver over one bar source.
pub struct WalkForward<'a> {
    source: &'a dyn BarSource,
    config: ExperimentConfig,
    calendar: TradingCalendar,
    selector: UniverseSelector,
    cells: Vec<Hyperparams>,
    panels: Mutex<HashMap<PanelKey, Option<Arc<DayPanel>>>>,
}

fn date_key(date: NaiveDate) -> u64 {
    date.num_days_from_ce() as u64
}

fn kind_index(kind: LearnerKind) -> u64 {
    LearnerKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64
}

impl<'a> WalkForward<'a> {
    pub fn new(source: &'a dyn BarSource, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let exp = &config.experiment;
        let early: HashSet<NaiveDate> = config.data.early_close.iter().copied().collect();
        let days: Vec<NaiveDate> = source
            .calendar()?
            .days()
            .iter()
            .copied()
            .filter(|d| *d >= exp.start && *d <= exp.end && !early.contains(d))
            .collect();
        if days.is_empty() {
            return Err(Error::MissingData(format!(
                "no trading days between {} and {}",
                exp.start, exp.end
            )));
        }
        let index = DollarVolumeIndex::build(source, config.universe.window_months)?;
        let selector = UniverseSelector::new(index, config.universe.size);
        let cells = config.grid.cells()?;
        Ok(WalkForward {
            source,
            calendar: TradingCalendar::new(days),
            selector,
            cells,
            config,
            panels: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn cells(&self) -> &[Hyperparams] {
        &self.cells
    }

    pub fn start_month(&self) -> Month {
        Month::of(self.config.experiment.start)
    }

    /// Every calendar month from the first eligible test month to the end.
    pub fn test_months(&self) -> Result<Vec<Month>> {
        let first = self.start_month().offset(HISTORY_MONTHS);
        let last = Month::of(self.config.experiment.end);
        if last < first {
            return Err(Error::InsufficientHistory(format!(
                "experiment ends in {last}; the first test month would be {first}"
            )));
        }
        Ok(months_between(first, last))
    }

    /// Layout for `test`, checking that every month it touches has data.
    pub fn layout(&self, test: Month) -> Result<PeriodLayout> {
        let layout = layout_periods(self.start_month(), test)?;
        for m in months_between(layout.universe_lookback[0], test) {
            if self.calendar.in_month(m).is_empty() {
                return Err(Error::MissingData(format!("no trading days in {m} (needed for test month {test})")));
            }
        }
        Ok(layout)
    }

    fn anchor(&self, date: NaiveDate, period_start: Month) -> NaiveDate {
        match self.config.universe.mode {
            UniverseMode::Rolling => date,
            UniverseMode::Fixed => period_start.first_day(),
        }
    }

    fn panel(&self, date: NaiveDate, anchor: NaiveDate) -> Result<Option<Arc<DayPanel>>> {
        if let Some(p) = self.panels.lock().unwrap().get(&(date, anchor)) {
            return Ok(p.clone());
        }
        let universe = self.selector.for_day(self.config.universe.mode, date, anchor);
        let panel = DayPanel::load(self.source, &universe)?.map(Arc::new);
        self.panels.lock().unwrap().insert((date, anchor), panel.clone());
        Ok(panel)
    }

    fn evict_before(&self, date: NaiveDate) {
        self.panels.lock().unwrap().retain(|k, _| k.0 >= date);
    }

    /// Panels for every trading day in `first ..= last`.
    fn period_panels(&self, first: Month, last: Month) -> Result<Vec<Arc<DayPanel>>> {
        let days = self.calendar.between(first.first_day(), last.succ().first_day());
        let mut out = Vec::with_capacity(days.len());
        for &d in days {
            if let Some(p) = self.panel(d, self.anchor(d, first))? {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn model_seed(&self, test: Month, kind: LearnerKind, hp: Hyperparams, dir: Direction) -> u64 {
        derive_seed(
            self.config.experiment.seed,
            &[
                test.ordinal() as u64,
                kind_index(kind),
                hp.end_x as i64 as u64,
                hp.bps as u64,
                dir.tag() as u64,
            ],
        )
    }

    /// Trains and validation-scores all cells for one learner.
    pub fn run_grid(&self, layout: &PeriodLayout, kind: LearnerKind) -> Result<GridOutcome> {
        let train_panels = self.period_panels(layout.training[0], layout.training[1])?;
        let valid_panels = self.period_panels(layout.validation, layout.validation)?;
        if train_panels.is_empty() || valid_panels.is_empty() {
            return Err(Error::MissingData(format!(
                "no tradable universe days in the training or validation period for {}",
                layout.test
            )));
        }
        let mut end_xs: Vec<i32> = self.cells.iter().map(|c| c.end_x).collect();
        end_xs.dedup();
        let mut features: HashMap<i32, (FeatureSet, FeatureSet)> = HashMap::new();
        for &e in &end_xs {
            if !features.contains_key(&e) {
                let train = FeatureSet::from_panels(&train_panels, e)?;
                let valid = FeatureSet::from_panels(&valid_panels, e)?;
                features.insert(e, (train, valid));
            }
        }

        let jobs: Vec<(usize, Direction)> = (0..self.cells.len())
            .flat_map(|c| Direction::BOTH.into_iter().map(move |d| (c, d)))
            .collect();
        let trained: Vec<(TrainedClassifier, Option<String>)> = jobs
            .par_iter()
            .map(|&(c, dir)| {
                let hp = self.cells[c];
                let (train, valid) = &features[&hp.end_x];
                let train_labels = train.labels(hp.bps, dir);
                let valid_labels = valid.labels(hp.bps, dir);
                let tx = Examples::new(&train.observations, train.cols, &train_labels)?;
                let vx = Examples::new(&valid.observations, valid.cols, &valid_labels)?;
                let seed = self.model_seed(layout.test, kind, hp, dir);
                match learners::train(kind, dir, hp, &tx, &vx, seed, &self.config.learners) {
                    Ok(model) => Ok((model, None)),
                    Err(e @ (Error::SingleClass { .. } | Error::Diverged { .. } | Error::NonFinite(_))) => {
                        warn!("{} {kind} {hp} {dir}: {e}; using no-trade model", layout.test);
                        Ok((learners::no_trade(kind, dir, hp, &tx, seed), Some(e.to_string())))
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;

        let valid_by_date: HashMap<NaiveDate, &Arc<DayPanel>> = valid_panels.iter().map(|p| (p.date, p)).collect();
        let mut trained = trained.into_iter();
        let mut cells = Vec::with_capacity(self.cells.len());
        for &hp in &self.cells {
            let (up, up_fb) = trained.next().expect("one model per job");
            let (down, down_fb) = trained.next().expect("one model per job");
            let (_, valid) = &features[&hp.end_x];
            let mut days = Vec::with_capacity(valid.day_ranges.len());
            for (date, range) in &valid.day_ranges {
                days.push(self.simulate_day(&up, &down, valid, range.clone(), valid_by_date[date], hp)?);
            }
            cells.push(CellOutcome {
                hyperparams: hp,
                up,
                down,
                fallbacks: [up_fb, down_fb],
                validation: score_days(&days, self.config.experiment.score),
            });
        }

        let degenerate = cells.iter().all(|c| c.validation.traded_days == 0);
        let selected = if kind == LearnerKind::Random {
            0
        } else {
            let scored: Vec<(Hyperparams, f64)> = cells.iter().map(|c| (c.hyperparams, c.validation.score)).collect();
            select_cell(&scored).expect("grid is nonempty")
        };
        if degenerate {
            warn!(
                "{} {kind}: degenerate month, no cell traded during validation; using {}",
                layout.test, cells[selected].hyperparams
            );
        }
        Ok(GridOutcome {
            cells,
            selected,
            degenerate,
        })
    }

    fn simulate_day(
        &self,
        up: &TrainedClassifier,
        down: &TrainedClassifier,
        fs: &FeatureSet,
        range: std::ops::Range<usize>,
        panel: &DayPanel,
        hp: Hyperparams,
    ) -> Result<DailyResult> {
        let x = fs.rows_slice(range.clone());
        let key = date_key(panel.date);
        let up_calls = up.predict(x, key)?.classes;
        let down_calls = down.predict(x, key)?.classes;
        let entry = last_observed_minute(panel.minutes, hp.end_x)? + 1;
        let decisions = decisions_for_day(panel.date, &fs.symbols[range], &up_calls, &down_calls, entry);
        let portfolio = allocate(panel.date, &decisions);
        realize(portfolio, decisions, panel, hp.end_x, &self.config.strategy)
    }

    /// Trades the test month with an already selected pair of models.
    pub fn run_test_month(
        &self,
        layout: &PeriodLayout,
        up: &TrainedClassifier,
        down: &TrainedClassifier,
        hp: Hyperparams,
    ) -> Result<Vec<DailyResult>> {
        let mut out = Vec::new();
        for &date in self.calendar.in_month(layout.test) {
            match self.panel(date, self.anchor(date, layout.test))? {
                Some(panel) => {
                    let fs = FeatureSet::from_panels(std::slice::from_ref(&panel), hp.end_x)?;
                    out.push(self.simulate_day(up, down, &fs, 0..fs.rows(), &panel, hp)?);
                }
                None => {
                    warn!("{date}: no tradable universe; no trades");
                    out.push(DailyResult {
                        date,
                        decisions: Vec::new(),
                        portfolio: Portfolio::empty(date),
                        positions: Vec::new(),
                        daily_return_bps: 0.0,
                        trade_precision: None,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Grid search plus test-month trading for one learner and month.
    pub fn run_month(&self, test: Month, kind: LearnerKind) -> Result<(MonthRecord, Vec<DailyResult>)> {
        let layout = self.layout(test)?;
        let grid = self.run_grid(&layout, kind)?;
        let cell = grid.selected_cell();
        let days = self.run_test_month(&layout, &cell.up, &cell.down, cell.hyperparams)?;
        let record = MonthRecord {
            kind,
            layout,
            selected: cell.hyperparams,
            degenerate: grid.degenerate,
            cells: grid
                .cells
                .iter()
                .map(|c| CellSummary {
                    hyperparams: c.hyperparams,
                    validation: c.validation,
                    up: ModelSummary::of(&c.up, &c.fallbacks[0]),
                    down: ModelSummary::of(&c.down, &c.fallbacks[1]),
                })
                .collect(),
            up: cell.up.clone(),
            down: cell.down.clone(),
            test_days: days.len(),
        };
        let traded: Vec<&DailyResult> = days.iter().filter(|d| d.traded()).collect();
        info!(
            "{test} {kind}: selected {} (validation {:.4}{}), traded {}/{} test days",
            cell.hyperparams,
            cell.validation.score,
            if grid.degenerate { ", degenerate" } else { "" },
            traded.len(),
            days.len()
        );
        Ok((record, days))
    }

    /// Runs every test month for every configured learner.
    pub fn run(&self) -> Result<ExperimentResult> {
        let workers = self.config.experiment.workers;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| self.run_sequential())
    }

    fn run_sequential(&self) -> Result<ExperimentResult> {
        let months = self.test_months()?;
        let mut runs: Vec<LearnerRun> = self
            .config
            .experiment
            .learners
            .iter()
            .map(|&kind| LearnerRun {
                kind,
                months: Vec::new(),
                days: Vec::new(),
            })
            .collect();
        for &test in &months {
            let layout = self.layout(test)?;
            self.evict_before(layout.training[0].first_day());
            for run in runs.iter_mut() {
                let (record, days) = self.run_month(test, run.kind)?;
                run.months.push(record);
                run.days.extend(days);
            }
        }
        Ok(ExperimentResult {
            config: self.config.clone(),
            fingerprint: self.source.fingerprint()?,
            runs,
        })
    }
}

/// Summarizes simulated validation days into a cell score. Cells that never
/// trade score 0.
pub fn score_days(days: &[DailyResult], method: ScoreMethod) -> ValidationScore {
    let mut s = ValidationScore {
        days: days.len(),
        ..ValidationScore::default()
    };
    let mut precision_sum = 0.0;
    for d in days {
        if let Some(p) = d.trade_precision {
            s.traded_days += 1;
            precision_sum += p;
            s.trades += d.positions.len();
            s.hits += d.positions.iter().filter(|p| p.is_correct()).count();
        }
    }
    s.score = match method {
        _ if s.traded_days == 0 => 0.0,
        ScoreMethod::DayMean => precision_sum / s.traded_days as f64,
        ScoreMethod::Pooled => s.hits as f64 / s.trades.max(1) as f64,
    };
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(y: i32, mo: u32) -> Month {
        Month::new(y, mo).unwrap()
    }

    #[test]
    fn first_test_month_layout() {
        let l = layout_periods(m(2001, 1), m(2003, 2)).unwrap();
        assert_eq!(l.validation, m(2003, 1));
        assert_eq!(l.training, [m(2002, 1), m(2002, 12)]);
        assert_eq!(l.universe_lookback, [m(2001, 1), m(2001, 12)]);
        assert_eq!(l.training_months().len(), 12);
    }

    #[test]
    fn layouts_shift_by_one_month() {
        let l = layout_periods(m(2001, 1), m(2003, 3)).unwrap();
        assert_eq!(l.validation, m(2003, 2));
        assert_eq!(l.training, [m(2002, 2), m(2003, 1)]);
    }

    #[test]
    fn too_early_test_month_is_rejected() {
        let err = layout_periods(m(2001, 1), m(2003, 1)).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory(_)));
    }

    #[test]
    fn ties_prefer_larger_threshold_then_shorter_horizon() {
        let hp = |e, b| Hyperparams::new(e, b).unwrap();
        let cells = [(hp(-5, 2), 0.6), (hp(-10, 5), 0.6), (hp(-5, 5), 0.6), (hp(-30, 25), 0.5)];
        assert_eq!(select_cell(&cells), Some(2));
        let cells = [(hp(-5, 2), 0.0), (hp(-30, 25), 0.0), (hp(-5, 25), 0.0)];
        assert_eq!(select_cell(&cells), Some(2));
        let cells = [(hp(-30, 2), 0.61), (hp(-5, 25), 0.6)];
        assert_eq!(select_cell(&cells), Some(0));
    }
}
