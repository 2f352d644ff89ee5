//! Daily tradable universe: top-N symbols by trailing dollar volume.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::sync::{Arc, Mutex};

use chrono::{Months, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::bars::BarSource;
use crate::calendar::TradingCalendar;
use crate::error::{Error, Result};
use crate::price::PRICE_SCALE;

/// How the twelve-month ranking window is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UniverseMode {
    /// Re-ranked every trading day from the window ending the day before.
    #[default]
    Rolling,
    /// Held fixed across each training/validation/test period, ranked as of
    /// the period's first day.
    Fixed,
}

/// Ranked tradable symbols for one date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniverseDay {
    pub date: NaiveDate,
    pub symbols: Vec<String>,
    /// Trailing dollar volume per symbol in price ticks × shares.
    pub dollar_volume_ticks: Vec<i128>,
    pub target_size: usize,
}

impl UniverseDay {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub fn ticks_to_currency(ticks: i128) -> f64 {
    ticks as f64 / PRICE_SCALE as f64
}

/// Per-date dollar volume of every symbol, scanned once from a bar source.
#[derive(Debug, Clone)]
pub struct DollarVolumeIndex {
    calendar: TradingCalendar,
    daily: Vec<Vec<(String, i128)>>,
    window_months: u32,
}

impl DollarVolumeIndex {
    pub fn build(source: &dyn BarSource, window_months: u32) -> Result<Self> {
        let calendar = source.calendar()?;
        let daily = calendar
            .days()
            .iter()
            .map(|d| source.daily_dollar_volumes(*d))
            .collect::<Result<Vec<_>>>()?;
        Ok(DollarVolumeIndex {
            calendar,
            daily,
            window_months,
        })
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    /// First day of the trailing window for `date`.
    pub fn window_start(&self, date: NaiveDate) -> NaiveDate {
        date.checked_sub_months(Months::new(self.window_months))
            .expect("date in range")
    }

    fn window_range(&self, date: NaiveDate) -> std::ops::Range<usize> {
        let days = self.calendar.days();
        let lo = days.partition_point(|d| *d < self.window_start(date));
        let hi = days.partition_point(|d| *d < date);
        lo..hi.max(lo)
    }

    /// True when the store holds data on or before the start of the window.
    pub fn covers_window(&self, date: NaiveDate) -> bool {
        self.calendar
            .first()
            .is_some_and(|first| first <= self.window_start(date))
    }

    /// Σ close × volume over bars dated in `[date − window, date)`, in ticks × shares.
    pub fn trailing_dollar_volume_ticks(&self, symbol: &str, date: NaiveDate) -> i128 {
        self.daily[self.window_range(date)]
            .iter()
            .flat_map(|day| day.iter())
            .filter(|(s, _)| s == symbol)
            .map(|(_, v)| *v)
            .sum()
    }

    pub fn trailing_dollar_volume(&self, symbol: &str, date: NaiveDate) -> f64 {
        ticks_to_currency(self.trailing_dollar_volume_ticks(symbol, date))
    }

    /// Trailing totals of every symbol seen in the window.
    pub fn trailing_totals(&self, date: NaiveDate) -> BTreeMap<String, i128> {
        let mut totals: BTreeMap<String, i128> = BTreeMap::new();
        for day in &self.daily[self.window_range(date)] {
            for (s, v) in day {
                *totals.entry(s.clone()).or_default() += *v;
            }
        }
        totals
    }
}

/// Top-`size` selection by trailing dollar volume, ties broken by symbol,
/// cached per date.
pub struct UniverseSelector {
    index: DollarVolumeIndex,
    size: usize,
    exclusions: BTreeSet<String>,
    cache: Mutex<HashMap<NaiveDate, Arc<UniverseDay>>>,
}

impl UniverseSelector {
    pub fn new(index: DollarVolumeIndex, size: usize) -> Self {
        UniverseSelector {
            index,
            size,
            exclusions: BTreeSet::new(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_exclusions(mut self, exclusions: BTreeSet<String>) -> Self {
        self.exclusions = exclusions;
        self
    }

    pub fn index(&self) -> &DollarVolumeIndex {
        &self.index
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn select(&self, date: NaiveDate) -> Arc<UniverseDay> {
        if let Some(u) = self.cache.lock().unwrap().get(&date) {
            return u.clone();
        }
        let u = Arc::new(select_universe(&self.index, date, self.size, &self.exclusions));
        self.cache.lock().unwrap().insert(date, u.clone());
        u
    }

    /// Universe used on `date`; `anchor` is the first day of the period the
    /// date belongs to and only matters in fixed mode.
    pub fn for_day(&self, mode: UniverseMode, date: NaiveDate, anchor: NaiveDate) -> Arc<UniverseDay> {
        match mode {
            UniverseMode::Rolling => self.select(date),
            UniverseMode::Fixed => {
                let u = self.select(anchor);
                if u.date == date {
                    u
                } else {
                    Arc::new(UniverseDay {
                        date,
                        ..(*u).clone()
                    })
                }
            }
        }
    }
}

pub fn select_universe(
    index: &DollarVolumeIndex,
    date: NaiveDate,
    size: usize,
    exclusions: &BTreeSet<String>,
) -> UniverseDay {
    let mut ranked: Vec<(String, i128)> = index
        .trailing_totals(date)
        .into_iter()
        .filter(|(s, _)| !exclusions.contains(s))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if ranked.len() < size {
        warn!(
            "{date}: universe shortfall, {} candidates for {size} slots",
            ranked.len()
        );
    }
    ranked.truncate(size);
    let (symbols, dollar_volume_ticks) = ranked.into_iter().unzip();
    UniverseDay {
        date,
        symbols,
        dollar_volume_ticks,
        target_size: size,
    }
}

/// Writes `date,rank,symbol,dollar_volume` rows (rank is 1-based).
pub fn write_universe_csv<W: Write>(out: W, days: &[Arc<UniverseDay>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "rank", "symbol", "dollar_volume"])
        .map_err(|e| Error::Malformed(e.to_string()))?;
    for day in days {
        for (rank, (sym, dv)) in day.symbols.iter().zip(&day.dollar_volume_ticks).enumerate() {
            let scale = PRICE_SCALE as i128;
            w.write_record([
                day.date.to_string(),
                (rank + 1).to_string(),
                sym.clone(),
                format!("{}.{:04}", dv / scale, dv % scale),
            ])
            .map_err(|e| Error::Malformed(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io("universe csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bars::{BarBlock, DayBars, MemoryStore, MinuteBar, SymbolDay};
    use crate::price::Price;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn constant_block(price: i64, volume: u64) -> BarBlock {
        let bars: Vec<MinuteBar> = (0..390)
            .map(|m| MinuteBar {
                volume,
                ..MinuteBar::flat(m, Price(price))
            })
            .collect();
        BarBlock::from_bars(&bars)
    }

    fn day(date: NaiveDate, rows: &[(&str, i64, u64)]) -> DayBars {
        DayBars::new(
            date,
            390,
            rows.iter()
                .map(|(s, p, v)| SymbolDay {
                    symbol: s.to_string(),
                    block: constant_block(*p, *v),
                })
                .collect(),
        )
    }

    fn index(days: Vec<DayBars>) -> DollarVolumeIndex {
        let mut store = MemoryStore::new();
        for d in days {
            store.insert(d);
        }
        DollarVolumeIndex::build(&store, 12).unwrap()
    }

    #[test]
    fn trailing_dollar_volume_arithmetic() {
        let idx = index(vec![
            day(d(2002, 1, 2), &[("A", 100_000, 100), ("B", 100_000, 200), ("Z", 100_000, 0)]),
            day(d(2002, 1, 3), &[("A", 100_000, 100)]),
        ]);
        assert_eq!(idx.trailing_dollar_volume("A", d(2002, 1, 3)), 390_000.0);
        assert_eq!(idx.trailing_dollar_volume("Z", d(2002, 1, 3)), 0.0);
        assert_eq!(idx.trailing_dollar_volume("Q", d(2002, 1, 3)), 0.0);
        assert_eq!(
            idx.trailing_dollar_volume_ticks("B", d(2002, 1, 3)),
            2 * idx.trailing_dollar_volume_ticks("A", d(2002, 1, 3))
        );
        // the date itself is excluded and the window is twelve months
        assert_eq!(idx.trailing_dollar_volume("A", d(2002, 1, 4)), 780_000.0);
        assert_eq!(idx.trailing_dollar_volume("A", d(2003, 1, 3)), 390_000.0);
    }

    #[test]
    fn top_n_with_lexicographic_ties() {
        let idx = index(vec![day(
            d(2002, 1, 2),
            &[("C", 10_000, 10), ("B", 10_000, 50), ("A", 10_000, 100), ("D", 10_000, 100)],
        )]);
        let none = BTreeSet::new();
        let u = select_universe(&idx, d(2002, 1, 3), 2, &none);
        assert_eq!(u.symbols, vec!["A", "D"]);
        let u = select_universe(&idx, d(2002, 1, 3), 1, &none);
        assert_eq!(u.symbols, vec!["A"]);
        let u = select_universe(&idx, d(2002, 1, 3), 500, &none);
        assert_eq!(u.len(), 4);
        let excl: BTreeSet<String> = ["A".to_string()].into();
        assert_eq!(select_universe(&idx, d(2002, 1, 3), 1, &excl).symbols, vec!["D"]);
    }

    #[test]
    fn future_bars_do_not_affect_selection() {
        let base = vec![
            day(d(2002, 1, 2), &[("A", 10_000, 100), ("B", 10_000, 90)]),
            day(d(2002, 1, 3), &[("A", 10_000, 1), ("B", 10_000, 1_000_000)]),
        ];
        let a = select_universe(&index(base[..1].to_vec()), d(2002, 1, 3), 1, &BTreeSet::new());
        let b = select_universe(&index(base), d(2002, 1, 3), 1, &BTreeSet::new());
        assert_eq!(a, b);
    }

    #[test]
    fn raising_volume_never_lowers_rank() {
        for bump in [1u64, 5, 50, 500] {
            let rows = [("A", 10_000, 100u64), ("B", 10_000, 80), ("C", 10_000, 60), ("D", 10_000, 40)];
            let before = select_universe(&index(vec![day(d(2002, 1, 2), &rows)]), d(2002, 1, 3), 4, &BTreeSet::new());
            let mut bumped = rows;
            bumped[2].2 += bump;
            let after = select_universe(&index(vec![day(d(2002, 1, 2), &bumped)]), d(2002, 1, 3), 4, &BTreeSet::new());
            let rank = |u: &UniverseDay| u.symbols.iter().position(|s| s == "C").unwrap();
            assert!(rank(&after) <= rank(&before));
        }
    }

    #[test]
    fn csv_output() {
        let idx = index(vec![day(d(2002, 1, 2), &[("A", 100_000, 100)])]);
        let sel = UniverseSelector::new(idx, 5);
        let mut buf = Vec::new();
        write_universe_csv(&mut buf, &[sel.select(d(2002, 1, 3))]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "date,rank,symbol,dollar_volume\n2002-01-03,1,A,390000.0000\n"
        );
    }
}
