//! Turns the Up and Down classifiers' daily calls into a dollar-balanced
//! long/short book held from the close of minute `E + 1` to the last close.

use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{last_observed_minute, relative_forward_return, DayPanel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Long,
    Short,
    NoOpinion,
    Conflict,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Long => "long",
            Action::Short => "short",
            Action::NoOpinion => "none",
            Action::Conflict => "conflict",
        }
    }

    pub fn is_trade(self) -> bool {
        matches!(self, Action::Long | Action::Short)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Truth table over the two classifiers' positive-class calls.
pub fn decide(up_class: bool, down_class: bool) -> Action {
    match (up_class, down_class) {
        (true, false) => Action::Long,
        (false, true) => Action::Short,
        (false, false) => Action::NoOpinion,
        (true, true) => Action::Conflict,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeDecision {
    pub symbol: String,
    pub date: NaiveDate,
    pub action: Action,
    pub entry_minute: usize,
    pub up_class: bool,
    pub down_class: bool,
}

/// Builds one decision per symbol from aligned class vectors.
pub fn decisions_for_day(
    date: NaiveDate,
    symbols: &[String],
    up: &[bool],
    down: &[bool],
    entry_minute: usize,
) -> Vec<TradeDecision> {
    assert_eq!(symbols.len(), up.len());
    assert_eq!(symbols.len(), down.len());
    symbols
        .iter()
        .zip(up.iter().zip(down))
        .map(|(s, (&u, &d))| TradeDecision {
            symbol: s.clone(),
            date,
            action: decide(u, d),
            entry_minute,
            up_class: u,
            down_class: d,
        })
        .collect()
}

/// Capital fractions for one day. Every long holds `1 / (2·n_long)` and every
/// short `1 / (2·n_short)`; a day without both sides holds nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub date: NaiveDate,
    pub longs: Vec<String>,
    pub shorts: Vec<String>,
}

impl Portfolio {
    pub fn empty(date: NaiveDate) -> Self {
        Portfolio {
            date,
            longs: Vec::new(),
            shorts: Vec::new(),
        }
    }

    pub fn is_trading(&self) -> bool {
        !self.longs.is_empty()
    }

    pub fn long_weight(&self) -> f64 {
        if self.longs.is_empty() {
            0.0
        } else {
            0.5 / self.longs.len() as f64
        }
    }

    pub fn short_weight(&self) -> f64 {
        if self.shorts.is_empty() {
            0.0
        } else {
            0.5 / self.shorts.len() as f64
        }
    }

    /// Both sides present or both absent. Since weights are `1/(2n)` per
    /// side, this makes the long and short totals equal exactly.
    pub fn is_balanced(&self) -> bool {
        self.longs.is_empty() == self.shorts.is_empty()
    }
}

pub fn allocate(date: NaiveDate, decisions: &[TradeDecision]) -> Portfolio {
    let pick = |a: Action| -> Vec<String> {
        decisions
            .iter()
            .filter(|d| d.action == a)
            .map(|d| d.symbol.clone())
            .collect()
    };
    let longs = pick(Action::Long);
    let shorts = pick(Action::Short);
    if longs.is_empty() || shorts.is_empty() {
        return Portfolio::empty(date);
    }
    Portfolio { date, longs, shorts }
}

/// P&L conventions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Use universe-relative instead of absolute symbol returns for P&L.
    pub pnl_relative: bool,
    /// Charged on entry and again on exit, per unit of capital traded.
    pub cost_bps_per_side: f64,
}

/// One allocated position after the close.
#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    pub symbol: String,
    pub action: Action,
    pub weight: f64,
    pub entry_px: f64,
    pub exit_px: f64,
    pub rel_return: f64,
    pub abs_return: f64,
}

impl Position {
    /// Long and rose against the universe, or short and fell.
    pub fn is_correct(&self) -> bool {
        match self.action {
            Action::Long => self.rel_return > 0.0,
            Action::Short => self.rel_return < 0.0,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyResult {
    pub date: NaiveDate,
    pub decisions: Vec<TradeDecision>,
    pub portfolio: Portfolio,
    pub positions: Vec<Position>,
    pub daily_return_bps: f64,
    pub trade_precision: Option<f64>,
}

impl DailyResult {
    pub fn traded(&self) -> bool {
        self.portfolio.is_trading()
    }
}

/// Fraction of positions that moved the right way against the universe;
/// `None` without positions. A zero relative return is a miss either way.
pub fn trade_precision(positions: &[Position]) -> Option<f64> {
    let traded: Vec<&Position> = positions.iter().filter(|p| p.action.is_trade()).collect();
    if traded.is_empty() {
        return None;
    }
    let hits = traded.iter().filter(|p| p.is_correct()).count();
    Some(hits as f64 / traded.len() as f64)
}

/// Prices the portfolio on the day's closes. Symbols missing from `panel`
/// are held as cash.
pub fn realize(
    portfolio: Portfolio,
    decisions: Vec<TradeDecision>,
    panel: &DayPanel,
    end_x: i32,
    config: &StrategyConfig,
) -> Result<DailyResult> {
    assert!(portfolio.is_balanced(), "unbalanced portfolio on {}", portfolio.date);
    let minutes = panel.minutes;
    let entry = last_observed_minute(minutes, end_x)? + 1;
    if entry >= minutes {
        return Err(Error::Invalid(format!("entry minute {entry} outside {minutes}-minute session")));
    }
    let mut positions = Vec::with_capacity(portfolio.longs.len() + portfolio.shorts.len());
    let sides = [
        (Action::Long, &portfolio.longs, portfolio.long_weight()),
        (Action::Short, &portfolio.shorts, portfolio.short_weight()),
    ];
    for (action, symbols, weight) in sides {
        for symbol in symbols {
            let Some(i) = panel.symbols.iter().position(|s| s == symbol) else {
                warn!("{}: no bars for allocated {symbol}; held as cash", portfolio.date);
                continue;
            };
            let closes = panel.close_row(i);
            let entry_px = closes[entry];
            let exit_px = closes[minutes - 1];
            positions.push(Position {
                symbol: symbol.clone(),
                action,
                weight,
                entry_px,
                exit_px,
                rel_return: relative_forward_return(closes, &panel.mean_returns, end_x)?,
                abs_return: exit_px / entry_px - 1.0,
            });
        }
    }

    let mut pnl = 0.0;
    let mut traded_weight = 0.0;
    for p in &positions {
        let r = if config.pnl_relative { p.rel_return } else { p.abs_return };
        let sign = if p.action == Action::Long { 1.0 } else { -1.0 };
        pnl += sign * p.weight * r;
        traded_weight += p.weight;
    }
    let daily_return_bps = 10_000.0 * pnl - 2.0 * config.cost_bps_per_side * traded_weight;
    let trade_precision = if portfolio.is_trading() {
        trade_precision(&positions)
    } else {
        None
    };
    Ok(DailyResult {
        date: portfolio.date,
        decisions,
        portfolio,
        positions,
        daily_return_bps,
        trade_precision,
    })
}

pub const TRADE_LOG_HEADER: [&str; 8] = [
    "date",
    "symbol",
    "action",
    "weight",
    "entry_px",
    "exit_px",
    "rel_fwd_return_bps",
    "abs_return_bps",
];

/// One row per allocated position, in date order.
pub fn write_trade_log<W: Write>(out: W, results: &[DailyResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Malformed(format!("trade log: {e}"));
    w.write_record(TRADE_LOG_HEADER).map_err(err)?;
    for day in results {
        for p in &day.positions {
            w.write_record([
                day.date.to_string(),
                p.symbol.clone(),
                p.action.to_string(),
                p.weight.to_string(),
                format!("{:.4}", p.entry_px),
                format!("{:.4}", p.exit_px),
                (p.rel_return * 10_000.0).to_string(),
                (p.abs_return * 10_000.0).to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io("trade log", e))
}
