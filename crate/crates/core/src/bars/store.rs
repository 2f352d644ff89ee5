//! Per-date columnar bar files and the `BarSource` abstraction.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       6     magic "IEBARS"
//! 6       1     version (1)
//! 7       1     reserved, zero
//! 8       4     date as YYYYMMDD (u32)
//! 12      2     minutes per session (u16)
//! 14      2     reserved, zero
//! 16      4     symbol count n (u32)
//! 20      16*n  symbol directory, ASCII, NUL padded, ascending
//! ...     40*m*n per-symbol blocks in directory order, each:
//!               open[m] i64, high[m] i64, low[m] i64, close[m] i64, volume[m] u64
//! end-8   8     first 8 bytes of SHA-256 over all preceding bytes
//! ```
//!
//! Prices are integer ten-thousandths of a currency unit.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use log::warn;
use sha2::{Digest, Sha256};

use crate::bars::{BarBlock, DayBars, SymbolDay};
use crate::calendar::TradingCalendar;
use crate::error::{Error, Result};
use crate::price::Price;

pub const STORE_MAGIC: &[u8; 6] = b"IEBARS";
pub const STORE_VERSION: u8 = 1;
const HEADER_LEN: usize = 20;
const SYMBOL_LEN: usize = 16;
const TRAILER_LEN: usize = 8;
const FILE_EXT: &str = "bars";

/// Anything that can serve daily bar sets: the on-disk store, an in-memory
/// store, or the synthetic market generator.
pub trait BarSource: Send + Sync {
    fn calendar(&self) -> Result<TradingCalendar>;

    /// Bars for `date`, or `None` when the source has no data for it.
    fn day(&self, date: NaiveDate) -> Result<Option<DayBars>>;

    /// Stable content identifier recorded in run manifests.
    fn fingerprint(&self) -> Result<String>;

    /// Σ close × volume per symbol for `date`, in price ticks × shares.
    fn daily_dollar_volumes(&self, date: NaiveDate) -> Result<Vec<(String, i128)>> {
        Ok(self
            .day(date)?
            .map(|day| {
                day.symbols
                    .iter()
                    .map(|s| (s.symbol.clone(), s.block.dollar_volume_ticks()))
                    .collect()
            })
            .unwrap_or_default())
    }
}

fn date_code(date: NaiveDate) -> u32 {
    date.year() as u32 * 10_000 + date.month() * 100 + date.day()
}

fn date_from_code(code: u32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt((code / 10_000) as i32, (code / 100) % 100, code % 100)
}

fn checksum(bytes: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(bytes);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

pub fn encode_day(day: &DayBars) -> Result<Vec<u8>> {
    let n = day.symbols.len();
    let m = day.minutes;
    let mut buf = Vec::with_capacity(HEADER_LEN + n * (SYMBOL_LEN + 40 * m) + TRAILER_LEN);
    buf.extend_from_slice(STORE_MAGIC);
    buf.push(STORE_VERSION);
    buf.push(0);
    buf.extend_from_slice(&date_code(day.date).to_le_bytes());
    buf.extend_from_slice(&(m as u16).to_le_bytes());
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for w in day.symbols.windows(2) {
        if w[0].symbol >= w[1].symbol {
            return Err(Error::Invalid(format!("symbols not strictly ascending at {}", w[1].symbol)));
        }
    }
    for s in &day.symbols {
        let bytes = s.symbol.as_bytes();
        if bytes.is_empty() || bytes.len() > SYMBOL_LEN || !s.symbol.is_ascii() || bytes.contains(&0) {
            return Err(Error::Invalid(format!("symbol {:?} cannot be stored", s.symbol)));
        }
        let mut field = [0u8; SYMBOL_LEN];
        field[..bytes.len()].copy_from_slice(bytes);
        buf.extend_from_slice(&field);
    }
    for s in &day.symbols {
        let b = &s.block;
        if b.len() != m || b.open.len() != m || b.high.len() != m || b.low.len() != m || b.volume.len() != m {
            return Err(Error::Invalid(format!("{}: block length {} != {m}", s.symbol, b.len())));
        }
        for col in [&b.open, &b.high, &b.low, &b.close] {
            for p in col.iter() {
                buf.extend_from_slice(&p.ticks().to_le_bytes());
            }
        }
        for v in &b.volume {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum);
    Ok(buf)
}

pub fn decode_day(bytes: &[u8], path: &Path) -> Result<DayBars> {
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(corrupt(format!("truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..6] != STORE_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    if bytes[6] != STORE_VERSION {
        return Err(corrupt(format!("unsupported version {}", bytes[6])));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
    if checksum(body) != trailer {
        return Err(corrupt("checksum mismatch".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
    let date = date_from_code(u32_at(8)).ok_or_else(|| corrupt("bad date".into()))?;
    let m = u16::from_le_bytes([body[12], body[13]]) as usize;
    let n = u32_at(16) as usize;
    let expected = HEADER_LEN + n * SYMBOL_LEN + n * 40 * m;
    if body.len() != expected {
        return Err(corrupt(format!("length {} != expected {expected}", body.len())));
    }
    let mut symbols = Vec::with_capacity(n);
    let mut off = HEADER_LEN;
    let mut names = Vec::with_capacity(n);
    for _ in 0..n {
        let field = &body[off..off + SYMBOL_LEN];
        let len = field.iter().position(|&b| b == 0).unwrap_or(SYMBOL_LEN);
        let name = std::str::from_utf8(&field[..len]).map_err(|_| corrupt("non-ascii symbol".into()))?;
        names.push(name.to_string());
        off += SYMBOL_LEN;
    }
    let read_i64 = |o: usize| i64::from_le_bytes(body[o..o + 8].try_into().unwrap());
    for name in names {
        let mut cols: [Vec<Price>; 4] = Default::default();
        for col in cols.iter_mut() {
            *col = (0..m).map(|i| Price(read_i64(off + 8 * i))).collect();
            off += 8 * m;
        }
        let volume = (0..m).map(|i| read_i64(off + 8 * i) as u64).collect();
        off += 8 * m;
        let [open, high, low, close] = cols;
        symbols.push(SymbolDay {
            symbol: name,
            block: BarBlock {
                open,
                high,
                low,
                close,
                volume,
            },
        });
    }
    Ok(DayBars {
        date,
        minutes: m,
        symbols,
    })
}

/// Directory of per-date bar files.
#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(FileStore { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::io(
                &root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "bar store directory not found"),
            ));
        }
        Ok(FileStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, date: NaiveDate) -> PathBuf {
        self.root.join(format!("{}.{FILE_EXT}", date.format("%Y-%m-%d")))
    }

    /// Writes one date file atomically (temp file then rename).
    pub fn write_day(&self, day: &DayBars) -> Result<()> {
        let bytes = encode_day(day)?;
        let path = self.path_for(day.date);
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn read_day(&self, date: NaiveDate) -> Result<Option<DayBars>> {
        let path = self.path_for(date);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let day = decode_day(&bytes, &path)?;
        if day.date != date {
            return Err(Error::Corrupt {
                path,
                reason: format!("file holds {} not {date}", day.date),
            });
        }
        Ok(Some(day))
    }

    pub fn dates(&self) -> Result<Vec<NaiveDate>> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some(FILE_EXT) {
                continue;
            }
            if let Some(date) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            {
                out.push(date);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Most recent close for `symbol` within `lookback` stored sessions before `date`.
    pub fn prior_close(&self, symbol: &str, date: NaiveDate, lookback: usize) -> Result<Option<Price>> {
        let dates = self.dates()?;
        let hi = dates.partition_point(|d| *d < date);
        for d in dates[..hi].iter().rev().take(lookback) {
            if let Some(day) = self.read_day(*d)? {
                if let Some(close) = day.get(symbol).and_then(|b| b.last_close()) {
                    return Ok(Some(close));
                }
            }
        }
        Ok(None)
    }
}

impl BarSource for FileStore {
    fn calendar(&self) -> Result<TradingCalendar> {
        Ok(TradingCalendar::new(self.dates()?))
    }

    fn day(&self, date: NaiveDate) -> Result<Option<DayBars>> {
        self.read_day(date)
    }

    /// Hash of every file name and its stored checksum trailer.
    fn fingerprint(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for date in self.dates()? {
            let path = self.path_for(date);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let trailer = &bytes[bytes.len().saturating_sub(TRAILER_LEN)..];
            hasher.update(date.to_string().as_bytes());
            hasher.update(trailer);
        }
        Ok(hex_string(&hasher.finalize()))
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// In-memory store, mostly for tests and small generated markets.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    days: BTreeMap<NaiveDate, DayBars>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, day: DayBars) {
        self.days.insert(day.date, day);
    }

    pub fn get_mut(&mut self, date: NaiveDate) -> Option<&mut DayBars> {
        self.days.get_mut(&date)
    }
}

impl BarSource for MemoryStore {
    fn calendar(&self) -> Result<TradingCalendar> {
        Ok(TradingCalendar::new(self.days.keys().copied().collect()))
    }

    fn day(&self, date: NaiveDate) -> Result<Option<DayBars>> {
        Ok(self.days.get(&date).cloned())
    }

    fn fingerprint(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for day in self.days.values() {
            hasher.update(encode_day(day)?);
        }
        Ok(hex_string(&hasher.finalize()))
    }
}

/// Close-price rows for requested symbols on one date, with full OHLCV alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct BarMatrix {
    pub date: NaiveDate,
    pub minutes: usize,
    pub symbols: Vec<String>,
    /// Row-major `symbols.len() × minutes`.
    pub closes: Vec<f64>,
    pub blocks: Vec<BarBlock>,
}

impl BarMatrix {
    pub fn rows(&self) -> usize {
        self.symbols.len()
    }

    pub fn close_row(&self, i: usize) -> &[f64] {
        &self.closes[i * self.minutes..(i + 1) * self.minutes]
    }
}

/// Loads the requested symbols for `date`, in request order. Symbols absent
/// on that date (untradable) are skipped; a missing date yields an empty matrix.
pub fn load_bars(source: &dyn BarSource, date: NaiveDate, symbols: &[String]) -> Result<BarMatrix> {
    let Some(day) = source.day(date)? else {
        warn!("no bars stored for {date}");
        return Ok(BarMatrix {
            date,
            minutes: crate::bars::MINUTES_PER_SESSION,
            symbols: Vec::new(),
            closes: Vec::new(),
            blocks: Vec::new(),
        });
    };
    let mut out = BarMatrix {
        date,
        minutes: day.minutes,
        symbols: Vec::new(),
        closes: Vec::with_capacity(symbols.len() * day.minutes),
        blocks: Vec::new(),
    };
    for sym in symbols {
        if let Some(block) = day.get(sym) {
            out.symbols.push(sym.clone());
            out.closes.extend(block.closes_f64());
            out.blocks.push(block.clone());
        }
    }
    Ok(out)
}
