//! Synthetic minute-bar markets with a controllable intraday inefficiency.
//!
//! Each symbol's log price follows a common market factor plus independent
//! idiosyncratic noise. During a signal regime, a symbol whose idiosyncratic
//! return from the open up to the drift exceeds `trigger_sigma` standard
//! deviations (in either direction) is *marked*, and keeps drifting the same
//! way by `strength_bps` over the last `drift_minutes` of the session. With
//! `strength_bps = 0` the market is a relative random walk.
//!
//! Every random draw comes from a stream keyed by (seed, date, symbol), so a
//! day can be generated on its own and markets that differ only in regime
//! strength share all their noise.

use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bars::{
    hex_string, BarBlock, BarSource, DayBars, FileStore, MinuteBar, SymbolDay, MINUTES_PER_SESSION, TRADE_CSV_HEADER,
};
use crate::calendar::{is_weekday, TradingCalendar};
use crate::dataset::{relative_forward_return, universe_mean_returns};
use crate::error::{Error, Result};
use crate::price::Price;
use crate::seed::{derive_seed, str_key};

/// One period of planted momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// First and last date (inclusive) the regime applies to.
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Drift given to marked symbols over the last `drift_minutes`, in bps.
    pub strength_bps: f64,
    /// Minutes of opening idiosyncratic return that decide marking; by
    /// default every minute before the drift anchor.
    #[serde(default)]
    pub window: Option<usize>,
    /// Marking threshold in standard deviations of that opening return.
    #[serde(default = "default_trigger")]
    pub trigger_sigma: f64,
    #[serde(default = "default_drift_minutes")]
    pub drift_minutes: usize,
}

/// Two-sided 10% normal tail.
fn default_trigger() -> f64 {
    1.644_853_626_951_472_2
}

fn default_drift_minutes() -> usize {
    29
}

impl Regime {
    pub fn new(start: NaiveDate, end: NaiveDate, strength_bps: f64) -> Self {
        Regime {
            start,
            end,
            strength_bps,
            window: None,
            trigger_sigma: default_trigger(),
            drift_minutes: default_drift_minutes(),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }

    /// Minute whose close starts the drift interval.
    pub fn drift_anchor(&self) -> usize {
        MINUTES_PER_SESSION - self.drift_minutes - 1
    }

    /// Minutes `1..=window` of idiosyncratic return decide marking.
    pub fn marking_window(&self) -> usize {
        self.window
            .unwrap_or_else(|| MINUTES_PER_SESSION.saturating_sub(self.drift_minutes + 2))
    }
}

/// Generator settings. Volatilities are per minute except `daily_vol_bps`,
/// which drives the open-to-open walk of each symbol's price level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_symbols: usize,
    pub start: NaiveDate,
    pub n_days: usize,
    pub idio_vol_bps: f64,
    pub market_vol_bps: f64,
    pub daily_vol_bps: f64,
    pub price_min: f64,
    pub price_max: f64,
    /// Median shares per minute across symbols.
    pub volume_median: f64,
    /// Log-scale spread of symbols' typical volume.
    pub volume_dispersion: f64,
    /// Log-scale minute-to-minute volume noise.
    pub volume_noise: f64,
    /// Extra volume at the open and close relative to midday.
    pub volume_u_shape: f64,
    pub regimes: Vec<Regime>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_symbols: 50,
            start: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
            n_days: 252,
            idio_vol_bps: 5.0,
            market_vol_bps: 3.0,
            daily_vol_bps: 100.0,
            price_min: 10.0,
            price_max: 200.0,
            volume_median: 300.0,
            volume_dispersion: 1.0,
            volume_noise: 0.5,
            volume_u_shape: 1.5,
            regimes: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SynthConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth: {m}")));
        if self.n_symbols == 0 || self.n_days == 0 {
            return bad("n_symbols and n_days must be positive".into());
        }
        if !(self.idio_vol_bps > 0.0) || !(self.market_vol_bps >= 0.0) || !(self.daily_vol_bps >= 0.0) {
            return bad("idio_vol_bps must be > 0; market_vol_bps and daily_vol_bps >= 0".into());
        }
        if !(self.price_min >= 1.0) || !(self.price_max >= self.price_min) {
            return bad("need 1 <= price_min <= price_max".into());
        }
        if !(self.volume_median >= 1.0) || !(self.volume_dispersion >= 0.0) || !(self.volume_noise >= 0.0) {
            return bad("volume_median must be >= 1; dispersion and noise >= 0".into());
        }
        if !(self.volume_u_shape >= 0.0) {
            return bad("volume_u_shape must be >= 0".into());
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.end < r.start {
                return bad(format!("regime {i}: end precedes start"));
            }
            if !(r.strength_bps >= 0.0) || !(r.trigger_sigma > 0.0) {
                return bad(format!("regime {i}: strength_bps must be >= 0 and trigger_sigma > 0"));
            }
            if r.marking_window() == 0
                || r.drift_minutes == 0
                || r.marking_window() + r.drift_minutes + 1 >= MINUTES_PER_SESSION
            {
                return bad(format!(
                    "regime {i}: window and drift_minutes must be positive and fit in the session before the drift"
                ));
            }
        }
        Ok(())
    }

    pub fn regime_on(&self, date: NaiveDate) -> Option<&Regime> {
        self.regimes.iter().find(|r| r.contains(date))
    }
}

/// Symbol names `S0000`, `S0001`, ...
pub fn symbol_name(i: usize) -> String {
    format!("S{i:04}")
}

/// Direction a symbol was marked on a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Up,
    Down,
}

impl Mark {
    pub fn sign(self) -> f64 {
        match self {
            Mark::Up => 1.0,
            Mark::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDay {
    pub bars: DayBars,
    /// Per symbol (sorted like `bars.symbols`).
    pub marks: Vec<Option<Mark>>,
}

const STREAM_LEVEL: u64 = 1;
const STREAM_MARKET: u64 = 2;
const STREAM_IDIO: u64 = 3;
const STREAM_VOLUME: u64 = 4;
const STREAM_PROFILE: u64 = 5;

/// A lazily generated market; also a [`BarSource`].
#[derive(Debug, Clone)]
pub struct SynthMarket {
    config: SynthConfig,
    symbols: Vec<String>,
    calendar: TradingCalendar,
    /// Open level per symbol per trading day.
    levels: Vec<Vec<f64>>,
    base_volume: Vec<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

fn date_key(date: NaiveDate) -> u64 {
    use chrono::Datelike;
    date.num_days_from_ce() as u64
}

impl SynthMarket {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut days = Vec::with_capacity(config.n_days);
        let mut d = config.start;
        while days.len() < config.n_days {
            if is_weekday(d) {
                days.push(d);
            }
            d += Duration::days(1);
        }
        let symbols: Vec<String> = (0..config.n_symbols).map(symbol_name).collect();
        let daily_sigma = config.daily_vol_bps * 1e-4;
        let mut levels = Vec::with_capacity(symbols.len());
        let mut base_volume = Vec::with_capacity(symbols.len());
        for sym in &symbols {
            let mut rng = stream(config.seed, &[STREAM_PROFILE, str_key(sym)]);
            let start_px = config.price_min * (config.price_max / config.price_min).powf(rng.random::<f64>());
            base_volume.push(config.volume_median * (config.volume_dispersion * normal(&mut rng)).exp());
            let mut rng = stream(config.seed, &[STREAM_LEVEL, str_key(sym)]);
            let mut log_level = start_px.ln();
            let mut row = Vec::with_capacity(days.len());
            for _ in &days {
                row.push(log_level.exp());
                log_level += daily_sigma * normal(&mut rng) - 0.5 * daily_sigma * daily_sigma;
                // keep levels inside the configured band
                log_level = log_level.clamp(config.price_min.ln(), config.price_max.ln());
            }
            levels.push(row);
        }
        Ok(SynthMarket {
            config,
            symbols,
            calendar: TradingCalendar::new(days),
            levels,
            base_volume,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        self.calendar.days()
    }

    fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.days().binary_search(&date).ok()
    }

    /// Bars and marks for one trading day, or `None` off the calendar.
    pub fn generate_day(&self, date: NaiveDate) -> Option<GeneratedDay> {
        let di = self.day_index(date)?;
        let cfg = &self.config;
        let n = MINUTES_PER_SESSION;
        let mut mrng = stream(cfg.seed, &[STREAM_MARKET, date_key(date)]);
        let market: Vec<f64> = (0..n).map(|_| cfg.market_vol_bps * 1e-4 * normal(&mut mrng)).collect();
        let regime = cfg.regime_on(date);
        let idio_sigma = cfg.idio_vol_bps * 1e-4;

        let mut symbols = Vec::with_capacity(self.symbols.len());
        let mut marks = Vec::with_capacity(self.symbols.len());
        for (si, sym) in self.symbols.iter().enumerate() {
            let mut irng = stream(cfg.seed, &[STREAM_IDIO, date_key(date), str_key(sym)]);
            let idio: Vec<f64> = (0..n).map(|_| idio_sigma * normal(&mut irng)).collect();
            let mark = regime.and_then(|r| {
                let window = r.marking_window();
                let opening: f64 = idio[1..=window].iter().sum();
                let threshold = r.trigger_sigma * idio_sigma * (window as f64).sqrt();
                if opening > threshold {
                    Some(Mark::Up)
                } else if opening < -threshold {
                    Some(Mark::Down)
                } else {
                    None
                }
            });
            let drift_from = regime.map(|r| n - r.drift_minutes).unwrap_or(n);
            let drift_per_minute = match (regime, mark) {
                (Some(r), Some(m)) => m.sign() * r.strength_bps * 1e-4 / r.drift_minutes as f64,
                _ => 0.0,
            };

            let mut vrng = stream(cfg.seed, &[STREAM_VOLUME, date_key(date), str_key(sym)]);
            let open_level = self.levels[si][di];
            let mut log_px = open_level.ln();
            let mut prev = Price::from_f64(open_level);
            let mut block = BarBlock::with_capacity(n);
            for m in 0..n {
                log_px += market[m] + idio[m] + if m >= drift_from { drift_per_minute } else { 0.0 };
                let close = Price::from_f64(log_px.exp());
                let x = (m as f64 - (n as f64 - 1.0) / 2.0) / ((n as f64 - 1.0) / 2.0);
                let shape = 1.0 + cfg.volume_u_shape * x * x;
                let noise = (cfg.volume_noise * normal(&mut vrng) - 0.5 * cfg.volume_noise * cfg.volume_noise).exp();
                let volume = (self.base_volume[si] * shape * noise).round().max(2.0) as u64;
                block.push(&MinuteBar {
                    minute_index: m as u16,
                    open: prev,
                    high: prev.max(close),
                    low: prev.min(close),
                    close,
                    volume,
                });
                prev = close;
            }
            symbols.push(SymbolDay {
                symbol: sym.clone(),
                block,
            });
            marks.push(mark);
        }
        Some(GeneratedDay {
            bars: DayBars::new(date, n, symbols),
            marks,
        })
    }

    /// Writes every generated day into `store`. Returns the number of days.
    pub fn write_store(&self, store: &FileStore) -> Result<usize> {
        for &date in self.calendar.days() {
            let day = self.generate_day(date).expect("calendar date");
            store.write_day(&day.bars)?;
        }
        Ok(self.calendar.days().len())
    }

    /// Emits trade prints that rebuild the bars exactly: one print at the
    /// bar's open price and one at its close, splitting the minute's volume.
    /// Timestamps carry a fixed `-05:00` offset.
    pub fn write_trades_csv<W: Write>(&self, out: W, dates: &[NaiveDate]) -> Result<usize> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Malformed(format!("trade csv: {e}"));
        w.write_record(TRADE_CSV_HEADER).map_err(err)?;
        let open = NaiveTime::from_hms_opt(9, 30, 0).expect("valid time");
        let mut rows = 0;
        for &date in dates {
            let Some(day) = self.generate_day(date) else {
                continue;
            };
            for sd in &day.bars.symbols {
                for bar in sd.block.bars() {
                    let t0 = date.and_time(open) + Duration::minutes(bar.minute_index as i64);
                    let stamp = |secs: i64| format!("{}-05:00", (t0 + Duration::seconds(secs)).format("%Y-%m-%dT%H:%M:%S"));
                    let first = bar.volume / 2;
                    for (secs, px, size) in [(1, bar.open, first), (59, bar.close, bar.volume - first)] {
                        w.write_record([stamp(secs), sd.symbol.clone(), px.to_string(), size.to_string(), "S".into()])
                            .map_err(err)?;
                        rows += 1;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::io("trade csv", e))?;
        Ok(rows)
    }
}

impl BarSource for SynthMarket {
    fn calendar(&self) -> Result<TradingCalendar> {
        Ok(self.calendar.clone())
    }

    fn day(&self, date: NaiveDate) -> Result<Option<DayBars>> {
        Ok(self.generate_day(date).map(|d| d.bars))
    }

    fn fingerprint(&self) -> Result<String> {
        let json = serde_json::to_vec(&self.config).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(b"synth-v1");
        h.update(&json);
        Ok(hex_string(&h.finalize()))
    }
}

/// Realized planted-signal statistics of a generated market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketReport {
    pub days: usize,
    pub symbol_days: usize,
    /// Symbol-days on which a regime was active.
    pub regime_symbol_days: usize,
    pub marked: usize,
    pub marked_fraction: f64,
    /// Mean of mark sign × universe-relative return from the close of the
    /// drift anchor minute to the last close, over marked symbol-days, in bps.
    pub conditional_drift_bps: f64,
    pub conditional_drift_se_bps: f64,
    pub planted_signal: bool,
}

impl MarketReport {
    pub fn summary(&self) -> String {
        if !self.planted_signal {
            return format!("no planted signal ({} days, {} symbol-days)", self.days, self.symbol_days);
        }
        format!(
            "{} days, marked {}/{} regime symbol-days ({:.4}), conditional drift {:.3} ± {:.3} bps",
            self.days,
            self.marked,
            self.regime_symbol_days,
            self.marked_fraction,
            self.conditional_drift_bps,
            self.conditional_drift_se_bps
        )
    }
}

/// Measures marked fraction and realized drift directly from the bars,
/// relative to the mean of all symbols.
pub fn describe_market(market: &SynthMarket) -> Result<MarketReport> {
    let mut report = MarketReport {
        days: market.trading_days().len(),
        symbol_days: 0,
        regime_symbol_days: 0,
        marked: 0,
        marked_fraction: 0.0,
        conditional_drift_bps: 0.0,
        conditional_drift_se_bps: 0.0,
        planted_signal: !market.config.regimes.is_empty(),
    };
    let mut values = Vec::new();
    for &date in market.trading_days() {
        let day = market.generate_day(date).expect("calendar date");
        let n = day.bars.minutes;
        report.symbol_days += day.bars.symbols.len();
        let Some(regime) = market.config.regime_on(date) else {
            continue;
        };
        report.regime_symbol_days += day.bars.symbols.len();
        let closes: Vec<f64> = day.bars.symbols.iter().flat_map(|s| s.block.closes_f64()).collect();
        let mean = universe_mean_returns(&closes, n)?;
        let end_x = regime.drift_anchor() as i32 + 1 - n as i32;
        for (i, mark) in day.marks.iter().enumerate() {
            if let Some(m) = mark {
                let rel = relative_forward_return(&closes[i * n..(i + 1) * n], &mean, end_x)?;
                values.push(m.sign() * rel * 10_000.0);
            }
        }
    }
    report.marked = values.len();
    if report.regime_symbol_days > 0 {
        report.marked_fraction = report.marked as f64 / report.regime_symbol_days as f64;
    }
    if !values.is_empty() {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        report.conditional_drift_bps = mean;
        report.conditional_drift_se_bps = (var / k).sqrt();
    }
    Ok(report)
}
