//! Aggregation of daily results into return series, smoothed curves,
//! histograms, early/late split tables and HFT-ratio correlations, plus the
//! CSV files that carry them.
//!
//! Cumulative returns compound multiplicatively and are reported in percent.
//! No-trade days count as 0 bps in return series and are left out of
//! precision means.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::Serialize;

use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::strategy::DailyResult;

/// Default smoothing window in trading days.
pub const SMOOTHING_WINDOW: usize = 40;
pub const RETURN_BIN_BPS: f64 = 2.0;
pub const PRECISION_BIN: f64 = 0.02;

/// One trading day of one learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayStat {
    pub date: NaiveDate,
    pub return_bps: f64,
    pub precision: Option<f64>,
    pub trades: usize,
}

impl DayStat {
    pub fn of(day: &DailyResult) -> Self {
        DayStat {
            date: day.date,
            return_bps: day.daily_return_bps,
            precision: day.trade_precision,
            trades: day.positions.len(),
        }
    }
}

/// A learner's daily statistics, dates strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub learner: String,
    pub days: Vec<DayStat>,
}

impl ReturnSeries {
    pub fn new(learner: impl Into<String>, days: Vec<DayStat>) -> Result<Self> {
        let learner = learner.into();
        if let Some(w) = days.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(Error::Invalid(format!(
                "{learner}: dates not strictly increasing at {} -> {}",
                w[0].date, w[1].date
            )));
        }
        Ok(ReturnSeries { learner, days })
    }

    pub fn from_results(learner: impl Into<String>, results: &[DailyResult]) -> Result<Self> {
        ReturnSeries::new(learner, results.iter().map(DayStat::of).collect())
    }

    pub fn returns(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.return_bps).collect()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        cumulative(&self.returns())
    }

    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        smooth_centered(&self.returns(), window)
    }

    pub fn precisions(&self) -> Vec<f64> {
        self.days.iter().filter_map(|d| d.precision).collect()
    }
}

/// Compounded cumulative return in percent after each day:
/// `100 · (Π (1 + r/10⁴) − 1)`.
pub fn cumulative(returns_bps: &[f64]) -> Vec<f64> {
    let mut growth = 1.0;
    returns_bps
        .iter()
        .map(|r| {
            growth *= 1.0 + r / 10_000.0;
            100.0 * (growth - 1.0)
        })
        .collect()
}

/// Centered moving mean. Point `i` averages positions `i - window/2 ..
/// i - window/2 + window`, truncated at the ends. A series no longer than the
/// window gets its global mean everywhere.
pub fn smooth_centered(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    if window == 0 {
        return values.to_vec();
    }
    if n <= window {
        let mean = values.iter().sum::<f64>() / n as f64;
        return vec![mean; n];
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(n);
            // sum directly for short windows to avoid prefix cancellation
            let sum: f64 = if hi - lo <= 64 {
                values[lo..hi].iter().sum()
            } else {
                prefix[hi] - prefix[lo]
            };
            sum / (hi - lo) as f64
        })
        .collect()
}

/// Counts over half-open bins `[k·w, (k+1)·w)`, contiguous from the lowest to
/// the highest occupied bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub width: f64,
    pub first_bin: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(lower, upper, count)` for each bin.
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.counts.iter().enumerate().map(move |(i, &c)| {
            let k = self.first_bin + i as i64;
            (k as f64 * self.width, (k + 1) as f64 * self.width, c)
        })
    }
}

/// Bin index of `v`. Quotients within 1e-9 of an integer snap to it, so
/// values sitting on an edge (like 0.06 / 0.02) land in the upper bin.
pub fn bin_index(v: f64, width: f64) -> i64 {
    let q = v / width;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        q.floor() as i64
    }
}

pub fn histogram(values: &[f64], width: f64) -> Result<Histogram> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::Invalid(format!("histogram bin width must be positive, got {width}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("histogram value {v} is not finite")));
    }
    let idx: Vec<i64> = values.iter().map(|&v| bin_index(v, width)).collect();
    let (Some(&lo), Some(&hi)) = (idx.iter().min(), idx.iter().max()) else {
        return Ok(Histogram {
            width,
            first_bin: 0,
            counts: Vec::new(),
        });
    };
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for k in idx {
        counts[(k - lo) as usize] += 1;
    }
    Ok(Histogram {
        width,
        first_bin: lo,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Early,
    Late,
}

impl Partition {
    /// Early runs through the split date inclusive.
    pub fn of(date: NaiveDate, split: NaiveDate) -> Self {
        if date <= split {
            Partition::Early
        } else {
            Partition::Late
        }
    }

    /// A month belongs to the partition of its first day.
    pub fn of_month(month: Month, split: NaiveDate) -> Self {
        Partition::of(month.first_day(), split)
    }

    pub fn name(self) -> &'static str {
        match self {
            Partition::Early => "early",
            Partition::Late => "late",
        }
    }
}

/// Summary of one learner over one partition. Every statistic is `None` for
/// an empty partition; `mean_precision` is also `None` when no day traded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionStats {
    pub learner: String,
    pub partition: Partition,
    pub days: usize,
    pub traded_days: usize,
    pub mean_daily_bps: Option<f64>,
    pub cumulative_pct: Option<f64>,
    pub mean_precision: Option<f64>,
}

impl PartitionStats {
    pub fn is_empty(&self) -> bool {
        self.days == 0
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn partition_stats(series: &ReturnSeries, partition: Partition, split: NaiveDate) -> PartitionStats {
    let days: Vec<&DayStat> = series.days.iter().filter(|d| Partition::of(d.date, split) == partition).collect();
    let returns: Vec<f64> = days.iter().map(|d| d.return_bps).collect();
    let precisions: Vec<f64> = days.iter().filter_map(|d| d.precision).collect();
    PartitionStats {
        learner: series.learner.clone(),
        partition,
        days: days.len(),
        traded_days: precisions.len(),
        mean_daily_bps: mean(&returns),
        cumulative_pct: cumulative(&returns).last().copied(),
        mean_precision: mean(&precisions),
    }
}

/// Early and Late rows for each learner, in input order.
pub fn split_report(series: &[ReturnSeries], split: NaiveDate) -> Vec<PartitionStats> {
    series
        .iter()
        .flat_map(|s| [Partition::Early, Partition::Late].map(|p| partition_stats(s, p, split)))
        .collect()
}

/// Product-moment correlation; `None` with fewer than two points, unequal
/// lengths, or zero variance in either series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Monthly HFT volume ratios, months strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct HftRatioSeries {
    pub points: Vec<(Month, f64)>,
}

pub const HFT_HEADER: [&str; 2] = ["month", "hft_ratio"];

impl HftRatioSeries {
    pub fn new(points: Vec<(Month, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Malformed(format!(
                    "hft ratio months must be unique and increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((m, r)) = points.iter().find(|(_, r)| !(0.0..=1.0).contains(r)) {
            return Err(Error::Malformed(format!("hft ratio for {m} is {r}, outside [0, 1]")));
        }
        Ok(HftRatioSeries { points })
    }

    /// Reads `month,hft_ratio` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Malformed(format!("hft csv header: {e}")))?
            .clone();
        if header.iter().map(str::trim).ne(HFT_HEADER) {
            return Err(Error::Malformed(format!(
                "hft csv header {:?}, expected {}",
                header.iter().collect::<Vec<_>>(),
                HFT_HEADER.join(",")
            )));
        }
        let mut points = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::Malformed(format!("hft csv row {}: {e}", i + 1)))?;
            let month: Month = row.get(0).unwrap_or("").parse()?;
            let ratio: f64 = row
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Malformed(format!("hft csv row {}: bad ratio {:?}", i + 1, row.get(1))))?;
            points.push((month, ratio));
        }
        HftRatioSeries::new(points)
    }

    pub fn get(&self, month: Month) -> Option<f64> {
        self.points.binary_search_by_key(&month, |p| p.0).ok().map(|i| self.points[i].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyPair {
    pub month: Month,
    pub partition: Partition,
    pub mean_daily_bps: f64,
    pub hft_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub partition: Partition,
    pub months: usize,
    pub pearson: Option<f64>,
    /// Why `pearson` is missing, if it is.
    pub note: Option<String>,
}

/// Pairs each month's mean daily return with that month's HFT ratio and
/// correlates them within each partition.
pub fn align_monthly(
    series: &ReturnSeries,
    hft: &HftRatioSeries,
    split: NaiveDate,
) -> (Vec<MonthlyPair>, [Correlation; 2]) {
    let mut monthly: Vec<(Month, Vec<f64>)> = Vec::new();
    for d in &series.days {
        let m = Month::of(d.date);
        match monthly.last_mut() {
            Some((last, v)) if *last == m => v.push(d.return_bps),
            _ => monthly.push((m, vec![d.return_bps])),
        }
    }
    let pairs: Vec<MonthlyPair> = monthly
        .into_iter()
        .filter_map(|(m, v)| {
            hft.get(m).map(|ratio| MonthlyPair {
                month: m,
                partition: Partition::of_month(m, split),
                mean_daily_bps: mean(&v).expect("month has days"),
                hft_ratio: ratio,
            })
        })
        .collect();
    let corr = [Partition::Early, Partition::Late].map(|p| {
        let part: Vec<&MonthlyPair> = pairs.iter().filter(|x| x.partition == p).collect();
        let x: Vec<f64> = part.iter().map(|x| x.hft_ratio).collect();
        let y: Vec<f64> = part.iter().map(|x| x.mean_daily_bps).collect();
        let pearson = pearson(&x, &y);
        let note = match (pearson, part.len()) {
            (Some(_), _) => None,
            (None, k) if k < 2 => Some(format!("{k} overlapping month(s); need at least 2")),
            (None, _) => Some("zero variance in returns or hft ratio".to_string()),
        };
        Correlation {
            partition: p,
            months: part.len(),
            pearson,
            note,
        }
    });
    (pairs, corr)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::Writer::from_writer(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(format!("csv write: {e}"))
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io("csv output", e))
}

pub const DAILY_RETURNS_HEADER: [&str; 5] = ["learner", "date", "daily_return_bps", "trade_precision", "trades"];

/// `learner,date,daily_return_bps,trade_precision,trades`; precision is blank
/// on days without trades.
pub fn write_daily_returns<W: Write>(out: W, series: &[ReturnSeries]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(DAILY_RETURNS_HEADER).map_err(csv_err)?;
    for s in series {
        for d in &s.days {
            w.write_record([
                s.learner.clone(),
                d.date.to_string(),
                d.return_bps.to_string(),
                opt(d.precision),
                d.trades.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Reads what [`write_daily_returns`] wrote, grouped by learner in order of
/// first appearance.
pub fn read_daily_returns<R: Read>(reader: R) -> Result<Vec<ReturnSeries>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Malformed(format!("daily returns header: {e}")))?
        .clone();
    if header.iter().ne(DAILY_RETURNS_HEADER) {
        return Err(Error::Malformed(format!(
            "daily returns header {:?}, expected {}",
            header.iter().collect::<Vec<_>>(),
            DAILY_RETURNS_HEADER.join(",")
        )));
    }
    let mut groups: Vec<(String, Vec<DayStat>)> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Malformed(format!("daily returns row {}: {e}", i + 1)))?;
        let bad = |field: &str| Error::Malformed(format!("daily returns row {}: bad {field}", i + 1));
        let learner = row.get(0).ok_or_else(|| bad("learner"))?.to_string();
        let date: NaiveDate = row.get(1).unwrap_or("").parse().map_err(|_| bad("date"))?;
        let return_bps: f64 = row.get(2).unwrap_or("").parse().map_err(|_| bad("daily_return_bps"))?;
        let precision = match row.get(3).unwrap_or("") {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("trade_precision"))?),
        };
        let trades: usize = row.get(4).unwrap_or("").parse().map_err(|_| bad("trades"))?;
        let stat = DayStat {
            date,
            return_bps,
            precision,
            trades,
        };
        match groups.iter_mut().find(|g| g.0 == learner) {
            Some(g) => g.1.push(stat),
            None => groups.push((learner, vec![stat])),
        }
    }
    groups.into_iter().map(|(l, d)| ReturnSeries::new(l, d)).collect()
}

/// `learner,date,cumulative_return_pct`
pub fn write_cumulative<W: Write>(out: W, series: &[ReturnSeries]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["learner", "date", "cumulative_return_pct"]).map_err(csv_err)?;
    for s in series {
        for (d, c) in s.days.iter().zip(s.cumulative()) {
            w.write_record([s.learner.clone(), d.date.to_string(), c.to_string()])
                .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `learner,date,daily_return_bps,smoothed_return_bps,cumulative_return_pct,smoothed_cumulative_pct`
pub fn write_smoothed<W: Write>(out: W, series: &[ReturnSeries], window: usize) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "learner",
        "date",
        "daily_return_bps",
        "smoothed_return_bps",
        "cumulative_return_pct",
        "smoothed_cumulative_pct",
    ])
    .map_err(csv_err)?;
    for s in series {
        let cum = s.cumulative();
        let smooth = s.smoothed(window);
        let smooth_cum = smooth_centered(&cum, window);
        for (i, d) in s.days.iter().enumerate() {
            w.write_record([
                s.learner.clone(),
                d.date.to_string(),
                d.return_bps.to_string(),
                smooth[i].to_string(),
                cum[i].to_string(),
                smooth_cum[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `learner,bin_lo,bin_hi,count` for each learner's histogram.
pub fn write_histograms<W: Write>(out: W, hists: &[(String, Histogram)]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["learner", "bin_lo", "bin_hi", "count"]).map_err(csv_err)?;
    for (learner, h) in hists {
        for (lo, hi, c) in h.bins() {
            w.write_record([learner.clone(), lo.to_string(), hi.to_string(), c.to_string()])
                .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Histograms of daily returns (all days) in 2-bps bins.
pub fn return_histograms(series: &[ReturnSeries]) -> Result<Vec<(String, Histogram)>> {
    series
        .iter()
        .map(|s| Ok((s.learner.clone(), histogram(&s.returns(), RETURN_BIN_BPS)?)))
        .collect()
}

/// Histograms of daily trade precision (trading days) in 0.02 bins.
pub fn precision_histograms(series: &[ReturnSeries]) -> Result<Vec<(String, Histogram)>> {
    series
        .iter()
        .map(|s| Ok((s.learner.clone(), histogram(&s.precisions(), PRECISION_BIN)?)))
        .collect()
}

/// `learner,partition,days,traded_days,mean_daily_return_bps,cumulative_return_pct,mean_precision,empty`
pub fn write_split_report<W: Write>(out: W, rows: &[PartitionStats]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "learner",
        "partition",
        "days",
        "traded_days",
        "mean_daily_return_bps",
        "cumulative_return_pct",
        "mean_precision",
        "empty",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.learner.clone(),
            r.partition.name().to_string(),
            r.days.to_string(),
            r.traded_days.to_string(),
            opt(r.mean_daily_bps),
            opt(r.cumulative_pct),
            opt(r.mean_precision),
            r.is_empty().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// `learner,month,partition,mean_daily_return_bps,hft_ratio`
pub fn write_hft_pairs<W: Write>(out: W, pairs: &[(String, Vec<MonthlyPair>)]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["learner", "month", "partition", "mean_daily_return_bps", "hft_ratio"])
        .map_err(csv_err)?;
    for (learner, ps) in pairs {
        for p in ps {
            w.write_record([
                learner.clone(),
                p.month.to_string(),
                p.partition.name().to_string(),
                p.mean_daily_bps.to_string(),
                p.hft_ratio.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `learner,partition,months,pearson,note`; `pearson` is blank when undefined.
pub fn write_correlations<W: Write>(out: W, rows: &[(String, [Correlation; 2])]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["learner", "partition", "months", "pearson", "note"])
        .map_err(csv_err)?;
    for (learner, cs) in rows {
        for c in cs {
            w.write_record([
                learner.clone(),
                c.partition.name().to_string(),
                c.months.to_string(),
                opt(c.pearson),
                c.note.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_edges_snap_upward() {
        assert_eq!(bin_index(0.06, 0.02), 3);
        assert_eq!(bin_index(2.0, 2.0), 1);
        assert_eq!(bin_index(1.9999, 2.0), 0);
        assert_eq!(bin_index(-0.5, 2.0), -1);
        assert_eq!(bin_index(-2.0, 2.0), -1);
    }

    #[test]
    fn month_partition_follows_its_first_day() {
        let split = NaiveDate::from_ymd_opt(2008, 9, 30).unwrap();
        assert_eq!(Partition::of_month(Month::new(2008, 9).unwrap(), split), Partition::Early);
        assert_eq!(Partition::of_month(Month::new(2008, 10).unwrap(), split), Partition::Late);
        assert_eq!(Partition::of(split, split), Partition::Early);
    }
}
