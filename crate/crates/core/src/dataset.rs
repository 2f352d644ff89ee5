//! Universe-relative observation vectors and directional labels.
//!
//! For a session of `n` minutes and a (negative) `end_x`, the last observed
//! minute is `E = n + end_x - 1`. Observations cover minutes `0..=E` and end
//! in an exact zero. Trades enter at the close of minute `E + 1` and exit at
//! the close of minute `n - 1`, so labels never share a price with the
//! observation window beyond its zero anchor.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::sync::Arc;

use chrono::NaiveDate;
use log::debug;
use serde::{Deserialize, Serialize};

use crate::bars::{load_bars, BarSource};
use crate::error::{Error, Result};
use crate::universe::UniverseDay;

pub const END_X_GRID: [i32; 3] = [-5, -10, -30];
pub const BPS_GRID: [u32; 4] = [2, 5, 10, 25];

/// Slack on the label threshold comparison, in bps, so that a forward
/// return equal to the threshold up to float rounding is not "more than" it.
pub const THRESHOLD_SLACK_BPS: f64 = 1e-9;

/// Entry minute offset and label threshold for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Negative offset of the last observed minute from the close.
    pub end_x: i32,
    /// Label threshold in basis points.
    pub bps: u32,
}

impl Hyperparams {
    pub fn new(end_x: i32, bps: u32) -> Result<Self> {
        if end_x >= -1 {
            return Err(Error::Invalid(format!("end_x must be < -1, got {end_x}")));
        }
        if bps == 0 {
            return Err(Error::Invalid("bps threshold must be > 0".into()));
        }
        Ok(Hyperparams { end_x, bps })
    }

    pub fn observation_len(&self, minutes: usize) -> usize {
        (minutes as i64 + self.end_x as i64) as usize
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "end_x={} bps={}", self.end_x, self.bps)
    }
}

/// The 3 × 4 grid, `end_x`-major.
pub fn default_grid() -> Vec<Hyperparams> {
    END_X_GRID
        .iter()
        .flat_map(|&e| BPS_GRID.iter().map(move |&b| Hyperparams { end_x: e, bps: b }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Up, Direction::Down];

    pub fn tag(self) -> u8 {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Direction::Up),
            1 => Some(Direction::Down),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

/// One-hot label; the pair is ordered (positive, negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub positive: bool,
}

impl Label {
    pub fn one_hot(self) -> [f64; 2] {
        if self.positive {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    }
}

/// Index of the last observed minute.
pub fn last_observed_minute(minutes: usize, end_x: i32) -> Result<usize> {
    let e = minutes as i64 + end_x as i64 - 1;
    if end_x >= 0 || e < 0 {
        return Err(Error::Invalid(format!("end_x {end_x} invalid for {minutes}-minute session")));
    }
    Ok(e as usize)
}

fn check_positive(closes: &[f64]) -> Result<()> {
    if closes.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::Invalid("nonpositive close".into()));
    }
    Ok(())
}

/// Mean one-minute simple return across rows of a row-major close matrix.
/// Entry 0 is zero.
pub fn universe_mean_returns(closes: &[f64], minutes: usize) -> Result<Vec<f64>> {
    if minutes == 0 || closes.is_empty() {
        return Err(Error::Empty("universe close matrix"));
    }
    if closes.len() % minutes != 0 {
        return Err(Error::Shape {
            expected: minutes,
            actual: closes.len() % minutes,
        });
    }
    check_positive(closes)?;
    let rows = closes.len() / minutes;
    let mut mean = vec![0.0; minutes];
    for row in closes.chunks_exact(minutes) {
        for m in 1..minutes {
            mean[m] += row[m] / row[m - 1] - 1.0;
        }
    }
    for v in mean.iter_mut().skip(1) {
        *v /= rows as f64;
    }
    Ok(mean)
}

/// Universe-relative cumulative returns measured backward from minute `E`:
/// entry `k` is `C_u(k→E) − C_s(k→E)`, the sign-flipped relative return from
/// minute `k`'s close to minute `E`'s close. The last entry is exactly zero.
pub fn make_observation(closes: &[f64], mean_returns: &[f64], end_x: i32) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    observation_into(closes, mean_returns, end_x, &mut out)?;
    Ok(out)
}

fn observation_into(closes: &[f64], mean_returns: &[f64], end_x: i32, out: &mut Vec<f64>) -> Result<()> {
    if closes.len() != mean_returns.len() {
        return Err(Error::Shape {
            expected: mean_returns.len(),
            actual: closes.len(),
        });
    }
    let e = last_observed_minute(closes.len(), end_x)?;
    check_positive(closes)?;
    let start = out.len();
    out.resize(start + e + 1, 0.0);
    let obs = &mut out[start..];
    let anchor = closes[e];
    let mut universe_growth = 1.0;
    for k in (0..e).rev() {
        universe_growth *= 1.0 + mean_returns[k + 1];
        let symbol_cum = anchor / closes[k] - 1.0;
        let universe_cum = universe_growth - 1.0;
        obs[k] = universe_cum - symbol_cum;
    }
    obs[e] = 0.0;
    Ok(())
}

/// Universe-relative return from the close of minute `E + 1` to the final close.
pub fn relative_forward_return(closes: &[f64], mean_returns: &[f64], end_x: i32) -> Result<f64> {
    let n = closes.len();
    if n != mean_returns.len() {
        return Err(Error::Shape {
            expected: mean_returns.len(),
            actual: n,
        });
    }
    let e = last_observed_minute(n, end_x)?;
    check_positive(closes)?;
    let entry = e + 1;
    if entry >= n {
        return Ok(0.0);
    }
    let symbol = closes[n - 1] / closes[entry] - 1.0;
    let universe = mean_returns[entry + 1..]
        .iter()
        .fold(1.0, |acc, r| acc * (1.0 + r))
        - 1.0;
    Ok(symbol - universe)
}

/// Strict threshold test on a relative forward return (fraction, not bps).
pub fn is_positive(relative_forward: f64, bps: u32, direction: Direction) -> bool {
    let rel_bps = relative_forward * 10_000.0;
    let t = bps as f64 + THRESHOLD_SLACK_BPS;
    match direction {
        Direction::Up => rel_bps > t,
        Direction::Down => rel_bps < -t,
    }
}

pub fn make_label(
    closes: &[f64],
    mean_returns: &[f64],
    end_x: i32,
    bps: u32,
    direction: Direction,
) -> Result<Label> {
    let rel = relative_forward_return(closes, mean_returns, end_x)?;
    Ok(Label {
        positive: is_positive(rel, bps, direction),
    })
}

/// Close prices of one day's universe members that are tradable and valid.
#[derive(Debug, Clone, PartialEq)]
pub struct DayPanel {
    pub date: NaiveDate,
    pub minutes: usize,
    /// Universe order (rank), untradable and invalid symbols removed.
    pub symbols: Vec<String>,
    pub closes: Vec<f64>,
    pub mean_returns: Vec<f64>,
    /// Universe members that were absent or had a nonpositive close.
    pub excluded: usize,
}

impl DayPanel {
    pub fn load(source: &dyn BarSource, universe: &UniverseDay) -> Result<Option<DayPanel>> {
        let matrix = load_bars(source, universe.date, &universe.symbols)?;
        let minutes = matrix.minutes;
        let mut symbols = Vec::with_capacity(matrix.rows());
        let mut closes = Vec::with_capacity(matrix.closes.len());
        for (i, sym) in matrix.symbols.iter().enumerate() {
            let row = matrix.close_row(i);
            if row.len() == minutes && check_positive(row).is_ok() {
                symbols.push(sym.clone());
                closes.extend_from_slice(row);
            }
        }
        let excluded = universe.len() - symbols.len();
        if excluded > 0 {
            debug!("{}: {excluded} universe symbols untradable or invalid", universe.date);
        }
        if symbols.is_empty() {
            return Ok(None);
        }
        let mean_returns = universe_mean_returns(&closes, minutes)?;
        Ok(Some(DayPanel {
            date: universe.date,
            minutes,
            symbols,
            closes,
            mean_returns,
            excluded,
        }))
    }

    pub fn rows(&self) -> usize {
        self.symbols.len()
    }

    pub fn close_row(&self, i: usize) -> &[f64] {
        &self.closes[i * self.minutes..(i + 1) * self.minutes]
    }
}

/// Observations and relative forward returns for a run of days at one `end_x`.
/// Labels for any threshold and direction derive from `rel_forward`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub end_x: i32,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub observations: Vec<f64>,
    pub rel_forward: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    pub symbols: Vec<String>,
    /// Row range of each day, date-ordered.
    pub day_ranges: Vec<(NaiveDate, Range<usize>)>,
}

impl FeatureSet {
    pub fn from_panels(panels: &[Arc<DayPanel>], end_x: i32) -> Result<Self> {
        let minutes = panels.first().map(|p| p.minutes).unwrap_or(crate::bars::MINUTES_PER_SESSION);
        let cols = last_observed_minute(minutes, end_x)? + 1;
        let rows: usize = panels.iter().map(|p| p.rows()).sum();
        let mut fs = FeatureSet {
            end_x,
            cols,
            observations: Vec::with_capacity(rows * cols),
            rel_forward: Vec::with_capacity(rows),
            dates: Vec::with_capacity(rows),
            symbols: Vec::with_capacity(rows),
            day_ranges: Vec::with_capacity(panels.len()),
        };
        for panel in panels {
            if panel.minutes != minutes {
                return Err(Error::Invalid(format!("{}: session length {} != {minutes}", panel.date, panel.minutes)));
            }
            let start = fs.rel_forward.len();
            for i in 0..panel.rows() {
                let row = panel.close_row(i);
                observation_into(row, &panel.mean_returns, end_x, &mut fs.observations)?;
                assert_eq!(fs.observations.last(), Some(&0.0), "zero anchor violated");
                fs.rel_forward.push(relative_forward_return(row, &panel.mean_returns, end_x)?);
                fs.dates.push(panel.date);
                fs.symbols.push(panel.symbols[i].clone());
            }
            fs.day_ranges.push((panel.date, start..fs.rel_forward.len()));
        }
        Ok(fs)
    }

    pub fn rows(&self) -> usize {
        self.rel_forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rel_forward.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.observations[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_slice(&self, range: Range<usize>) -> &[f64] {
        &self.observations[range.start * self.cols..range.end * self.cols]
    }

    pub fn labels(&self, bps: u32, direction: Direction) -> Vec<bool> {
        self.rel_forward
            .iter()
            .map(|r| is_positive(*r, bps, direction))
            .collect()
    }
}

/// Observation matrix with labels for one hyperparameter cell and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub hyperparams: Hyperparams,
    pub direction: Direction,
    pub features: FeatureSet,
    pub labels: Vec<bool>,
}

impl Dataset {
    pub fn new(features: FeatureSet, hyperparams: Hyperparams, direction: Direction) -> Self {
        let labels = features.labels(hyperparams.bps, direction);
        Dataset {
            hyperparams,
            direction,
            features,
            labels,
        }
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }
}

/// Loads each date's universe panel and builds the example matrix, date-major
/// then universe rank.
pub fn build_dataset(
    dates: &[NaiveDate],
    source: &dyn BarSource,
    universes: &dyn Fn(NaiveDate) -> Arc<UniverseDay>,
    hyperparams: Hyperparams,
    direction: Direction,
) -> Result<Dataset> {
    if dates.is_empty() {
        return Err(Error::Empty("dataset period"));
    }
    let mut panels = Vec::with_capacity(dates.len());
    for &date in dates {
        if let Some(p) = DayPanel::load(source, &universes(date))? {
            panels.push(Arc::new(p));
        }
    }
    let features = FeatureSet::from_panels(&panels, hyperparams.end_x)?;
    Ok(Dataset::new(features, hyperparams, direction))
}

const DATASET_MAGIC: &[u8; 6] = b"IEDSET";
const DATASET_VERSION: u8 = 1;

/// Debug dump. Layout (little-endian): magic "IEDSET", version u8, reserved
/// u8, rows u64, cols u64, end_x i32, bps u32, direction u8 (0 up, 1 down),
/// 7 reserved bytes, `rows × cols` f64 observations row-major, `rows` label
/// bytes (1 positive, 0 negative).
pub fn write_dataset<W: Write>(mut out: W, ds: &Dataset) -> Result<()> {
    let io = |e| Error::io("dataset dump", e);
    let mut header = Vec::with_capacity(40);
    header.extend_from_slice(DATASET_MAGIC);
    header.push(DATASET_VERSION);
    header.push(0);
    header.extend_from_slice(&(ds.rows() as u64).to_le_bytes());
    header.extend_from_slice(&(ds.features.cols as u64).to_le_bytes());
    header.extend_from_slice(&ds.hyperparams.end_x.to_le_bytes());
    header.extend_from_slice(&ds.hyperparams.bps.to_le_bytes());
    header.push(ds.direction.tag());
    header.extend_from_slice(&[0; 7]);
    out.write_all(&header).map_err(io)?;
    let mut body = Vec::with_capacity(ds.features.observations.len() * 8 + ds.rows());
    for v in &ds.features.observations {
        body.extend_from_slice(&v.to_le_bytes());
    }
    body.extend(ds.labels.iter().map(|&l| l as u8));
    out.write_all(&body).map_err(io)
}

/// Reads a dump back as (hyperparams, direction, cols, observations, labels).
pub fn read_dataset<R: Read>(mut input: R) -> Result<(Hyperparams, Direction, usize, Vec<f64>, Vec<bool>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("dataset dump", e))?;
    let corrupt = |r: &str| Error::Corrupt {
        path: "dataset dump".into(),
        reason: r.to_string(),
    };
    if bytes.len() < 40 || &bytes[..6] != DATASET_MAGIC || bytes[6] != DATASET_VERSION {
        return Err(corrupt("bad header"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let end_x = i32::from_le_bytes(bytes[24..28].try_into().unwrap());
    let bps = u32::from_le_bytes(bytes[28..32].try_into().unwrap());
    let direction = Direction::from_tag(bytes[32]).ok_or_else(|| corrupt("bad direction"))?;
    let need = 40 + rows * cols * 8 + rows;
    if bytes.len() != need {
        return Err(corrupt("length mismatch"));
    }
    let obs = bytes[40..40 + rows * cols * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = bytes[40 + rows * cols * 8..].iter().map(|&b| b != 0).collect();
    Ok((Hyperparams { end_x, bps }, direction, cols, obs, labels))
}
