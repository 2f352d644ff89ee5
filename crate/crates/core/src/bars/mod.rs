//! Trade ingestion, one-minute OHLCV bars and the per-date bar store.

mod ingest;
mod minute;
mod store;

use chrono::{DateTime, FixedOffset, NaiveDate, Timelike};

use crate::price::Price;

pub use ingest::{
    bars_from_trades, ingest_trades, read_exclusions, TRADE_CSV_HEADER, BarBuildSummary, IngestStats, SymbolChange,
    SymbolMap,
};
pub use minute::{build_minute_bars, BuiltBars};
pub(crate) use store::hex_string;
pub use store::{load_bars, BarMatrix, BarSource, FileStore, MemoryStore, STORE_MAGIC, STORE_VERSION};

/// Minutes in a regular US equity session.
pub const MINUTES_PER_SESSION: usize = 390;

/// One reported trade.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeRecord {
    pub timestamp: DateTime<FixedOffset>,
    pub symbol: String,
    pub price: Price,
    pub size: u64,
    pub exchange: String,
}

impl TradeRecord {
    /// Session date in the exchange-local wall clock carried by the timestamp offset.
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// Session boundaries for one date, in minutes after local midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSpec {
    pub date: NaiveDate,
    pub open_minute: u32,
    pub close_minute: u32,
}

impl SessionSpec {
    /// 09:30 to 16:00.
    pub fn regular(date: NaiveDate) -> Self {
        SessionSpec {
            date,
            open_minute: 9 * 60 + 30,
            close_minute: 16 * 60,
        }
    }

    pub fn minutes_per_session(&self) -> usize {
        (self.close_minute - self.open_minute) as usize
    }

    /// Minute index of a timestamp, using half-open `[t, t+60s)` minutes.
    /// `None` when the timestamp is on another date or outside `[open, close)`.
    pub fn minute_index(&self, ts: &DateTime<FixedOffset>) -> Option<usize> {
        if ts.date_naive() != self.date {
            return None;
        }
        let secs = ts.time().num_seconds_from_midnight();
        let open = self.open_minute * 60;
        let close = self.close_minute * 60;
        if secs < open || secs >= close {
            return None;
        }
        Some(((secs - open) / 60) as usize)
    }
}

/// One symbol's OHLCV for one minute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinuteBar {
    pub minute_index: u16,
    pub open: Price,
    pub high: Price,
    pub low: Price,
    pub close: Price,
    pub volume: u64,
}

impl MinuteBar {
    pub fn flat(minute_index: usize, price: Price) -> Self {
        MinuteBar {
            minute_index: minute_index as u16,
            open: price,
            high: price,
            low: price,
            close: price,
            volume: 0,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.low <= self.open
            && self.open <= self.high
            && self.low <= self.close
            && self.close <= self.high
    }
}

/// Columnar OHLCV for one symbol-day.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BarBlock {
    pub open: Vec<Price>,
    pub high: Vec<Price>,
    pub low: Vec<Price>,
    pub close: Vec<Price>,
    pub volume: Vec<u64>,
}

impl BarBlock {
    pub fn with_capacity(minutes: usize) -> Self {
        BarBlock {
            open: Vec::with_capacity(minutes),
            high: Vec::with_capacity(minutes),
            low: Vec::with_capacity(minutes),
            close: Vec::with_capacity(minutes),
            volume: Vec::with_capacity(minutes),
        }
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    pub fn push(&mut self, bar: &MinuteBar) {
        self.open.push(bar.open);
        self.high.push(bar.high);
        self.low.push(bar.low);
        self.close.push(bar.close);
        self.volume.push(bar.volume);
    }

    pub fn bar(&self, minute: usize) -> MinuteBar {
        MinuteBar {
            minute_index: minute as u16,
            open: self.open[minute],
            high: self.high[minute],
            low: self.low[minute],
            close: self.close[minute],
            volume: self.volume[minute],
        }
    }

    pub fn bars(&self) -> Vec<MinuteBar> {
        (0..self.len()).map(|m| self.bar(m)).collect()
    }

    pub fn from_bars(bars: &[MinuteBar]) -> Self {
        let mut block = BarBlock::with_capacity(bars.len());
        for b in bars {
            block.push(b);
        }
        block
    }

    pub fn last_close(&self) -> Option<Price> {
        self.close.last().copied()
    }

    pub fn total_volume(&self) -> u64 {
        self.volume.iter().sum()
    }

    /// Σ close × volume in price ticks × shares.
    pub fn dollar_volume_ticks(&self) -> i128 {
        self.close
            .iter()
            .zip(&self.volume)
            .map(|(c, v)| c.ticks() as i128 * *v as i128)
            .sum()
    }

    pub fn closes_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.close.iter().map(|p| p.to_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolDay {
    pub symbol: String,
    pub block: BarBlock,
}

/// All tradable symbols' bars for one date, sorted by symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayBars {
    pub date: NaiveDate,
    pub minutes: usize,
    pub symbols: Vec<SymbolDay>,
}

impl DayBars {
    pub fn new(date: NaiveDate, minutes: usize, mut symbols: Vec<SymbolDay>) -> Self {
        symbols.sort_by(|a, b| a.symbol.cmp(&b.symbol));
        DayBars {
            date,
            minutes,
            symbols,
        }
    }

    pub fn get(&self, symbol: &str) -> Option<&BarBlock> {
        self.symbols
            .binary_search_by(|s| s.symbol.as_str().cmp(symbol))
            .ok()
            .map(|i| &self.symbols[i].block)
    }
}
