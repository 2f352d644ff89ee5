//! Trade CSV ingestion, symbol mapping and exclusions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use chrono::{DateTime, Days, NaiveDate};
use log::{debug, info, warn};

use crate::bars::{build_minute_bars, DayBars, SessionSpec, SymbolDay, TradeRecord, MINUTES_PER_SESSION};
use crate::calendar::is_weekday;
use crate::error::{Error, Result};
use crate::price::Price;

pub const TRADE_CSV_HEADER: [&str; 5] = ["timestamp", "symbol", "price", "size", "exchange"];
const MAX_SYMBOL_LEN: usize = 16;

/// A ticker change: records dated before `effective_date` under `old_symbol`
/// are renamed to `new_symbol`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolChange {
    pub effective_date: NaiveDate,
    pub old_symbol: String,
    pub new_symbol: String,
}

/// Known symbol changes plus the exclusion set (ETFs, test symbols).
#[derive(Debug, Clone, Default)]
pub struct SymbolMap {
    by_old: HashMap<String, Vec<(NaiveDate, String)>>,
    exclusions: HashSet<String>,
}

impl SymbolMap {
    pub fn new(changes: Vec<SymbolChange>, exclusions: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut by_old: HashMap<String, Vec<(NaiveDate, String)>> = HashMap::new();
        for c in &changes {
            by_old
                .entry(c.old_symbol.clone())
                .or_default()
                .push((c.effective_date, c.new_symbol.clone()));
        }
        for v in by_old.values_mut() {
            v.sort();
        }
        let map = SymbolMap {
            by_old,
            exclusions: exclusions.into_iter().collect(),
        };
        map.check_acyclic(&changes)?;
        Ok(map)
    }

    /// Parses `effective_date,old_symbol,new_symbol` rows.
    pub fn changes_from_csv<R: Read>(reader: R) -> Result<Vec<SymbolChange>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::Malformed(format!("symbol map row {}: {e}", i + 2)))?;
            if row.len() != 3 {
                return Err(Error::Malformed(format!("symbol map row {}: expected 3 fields", i + 2)));
            }
            let effective_date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
                .map_err(|e| Error::Malformed(format!("symbol map row {}: {e}", i + 2)))?;
            out.push(SymbolChange {
                effective_date,
                old_symbol: row[1].to_string(),
                new_symbol: row[2].to_string(),
            });
        }
        Ok(out)
    }

    pub fn is_excluded(&self, symbol: &str) -> bool {
        self.exclusions.contains(symbol)
    }

    /// Canonical symbol for a record dated `date`, following chains of changes.
    pub fn resolve(&self, symbol: &str, date: NaiveDate) -> Result<String> {
        let mut current = symbol.to_string();
        let mut seen = HashSet::new();
        loop {
            let next = self.by_old.get(&current).and_then(|entries| {
                entries
                    .iter()
                    .find(|(eff, _)| date < *eff)
                    .map(|(_, new)| new.clone())
            });
            match next {
                None => return Ok(current),
                Some(next) => {
                    if !seen.insert(current.clone()) {
                        return Err(Error::SymbolCycle { symbol: current, date });
                    }
                    current = next;
                }
            }
        }
    }

    fn check_acyclic(&self, changes: &[SymbolChange]) -> Result<()> {
        let mut probe_dates: BTreeSet<NaiveDate> = changes
            .iter()
            .filter_map(|c| c.effective_date.checked_sub_days(Days::new(1)))
            .collect();
        if let Some(min) = probe_dates.iter().next().copied() {
            probe_dates.insert(min);
        }
        for date in probe_dates {
            for old in self.by_old.keys() {
                self.resolve(old, date)?;
            }
        }
        Ok(())
    }
}

/// One symbol per line; blank lines and `#` comments ignored.
pub fn read_exclusions<R: Read>(reader: R) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::Malformed(format!("exclusion list: {e}")))?;
        let s = line.trim();
        if !s.is_empty() && !s.starts_with('#') {
            out.insert(s.to_string());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub rows: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub excluded: usize,
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<TradeRecord, String> {
    if row.len() != TRADE_CSV_HEADER.len() {
        return Err(format!("expected 5 fields, got {}", row.len()));
    }
    let timestamp = DateTime::parse_from_rfc3339(row[0].trim()).map_err(|e| format!("timestamp: {e}"))?;
    let symbol = row[1].trim().to_string();
    if symbol.is_empty()
        || symbol.len() > MAX_SYMBOL_LEN
        || !symbol.bytes().all(|b| b.is_ascii_graphic())
    {
        return Err(format!("invalid symbol {symbol:?}"));
    }
    let price: Price = row[2].parse().map_err(|e: Error| e.to_string())?;
    if !price.is_positive() {
        return Err(format!("nonpositive price {}", &row[2]));
    }
    let size: u64 = row[3].trim().parse().map_err(|_| format!("invalid size {:?}", &row[3]))?;
    if size == 0 {
        return Err("zero size".into());
    }
    Ok(TradeRecord {
        timestamp,
        symbol,
        price,
        size,
        exchange: row[4].trim().to_string(),
    })
}

/// Reads trade CSV sources, canonicalizes symbols, drops excluded symbols and
/// returns records sorted by (symbol, timestamp). Malformed rows are counted.
pub fn ingest_trades<R: Read>(
    sources: impl IntoIterator<Item = R>,
    map: &SymbolMap,
) -> Result<(Vec<TradeRecord>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for source in sources {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(source);
        let header = rdr
            .headers()
            .map_err(|e| Error::Malformed(format!("trade csv header: {e}")))?
            .clone();
        if header.iter().map(str::trim).ne(TRADE_CSV_HEADER.iter().copied()) {
            return Err(Error::Malformed(format!(
                "trade csv header {:?}, expected {}",
                header.iter().collect::<Vec<_>>(),
                TRADE_CSV_HEADER.join(",")
            )));
        }
        let mut row = csv::StringRecord::new();
        loop {
            match rdr.read_record(&mut row) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) if e.is_io_error() => {
                    return Err(Error::Malformed(format!("trade csv read: {e}")));
                }
                Err(e) => {
                    stats.rows += 1;
                    stats.malformed += 1;
                    debug!("malformed trade row: {e}");
                    continue;
                }
            }
            stats.rows += 1;
            let mut rec = match parse_row(&row) {
                Ok(r) => r,
                Err(reason) => {
                    stats.malformed += 1;
                    if stats.malformed <= 5 {
                        warn!("malformed trade row {}: {reason}", stats.rows);
                    }
                    continue;
                }
            };
            if map.is_excluded(&rec.symbol) {
                stats.excluded += 1;
                continue;
            }
            rec.symbol = map.resolve(&rec.symbol, rec.date())?;
            if map.is_excluded(&rec.symbol) {
                stats.excluded += 1;
                continue;
            }
            stats.accepted += 1;
            records.push(rec);
        }
    }
    // stable: equal timestamps keep file order
    records.sort_by(|a, b| a.symbol.cmp(&b.symbol).then(a.timestamp.cmp(&b.timestamp)));
    Ok((records, stats))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BarBuildSummary {
    pub symbol_days_built: usize,
    pub untradable: usize,
    pub out_of_session: usize,
    /// Trades dated on weekends.
    pub off_calendar: usize,
    /// Early-close sessions skipped entirely.
    pub skipped_dates: Vec<NaiveDate>,
}

/// Groups sorted trade records into per-date bar sets. Only symbols with at
/// least one trade on a date are built for that date. `prior_close` supplies
/// the previous session's close when this batch has none for the symbol.
pub fn bars_from_trades(
    records: &[TradeRecord],
    mut prior_close: impl FnMut(&str, NaiveDate) -> Option<Price>,
    early_close: &BTreeSet<NaiveDate>,
) -> (Vec<DayBars>, BarBuildSummary) {
    let mut summary = BarBuildSummary::default();
    let mut by_date: BTreeMap<NaiveDate, BTreeMap<&str, Vec<TradeRecord>>> = BTreeMap::new();
    for rec in records {
        by_date
            .entry(rec.date())
            .or_default()
            .entry(rec.symbol.as_str())
            .or_default()
            .push(rec.clone());
    }

    let mut last_close: HashMap<String, Price> = HashMap::new();
    let mut days = Vec::new();
    for (date, symbols) in by_date {
        if !is_weekday(date) {
            summary.off_calendar += symbols.values().map(Vec::len).sum::<usize>();
            warn!("{date}: trades on a non-session day ignored");
            continue;
        }
        if early_close.contains(&date) {
            info!("{date}: early-close session skipped");
            summary.skipped_dates.push(date);
            continue;
        }
        let session = SessionSpec::regular(date);
        let mut built_days = Vec::new();
        for (symbol, trades) in symbols {
            let prior = last_close
                .get(symbol)
                .copied()
                .or_else(|| prior_close(symbol, date));
            let built = build_minute_bars(&trades, &session, prior);
            summary.out_of_session += built.discarded;
            match built.block {
                Some(block) => {
                    if let Some(c) = block.last_close() {
                        last_close.insert(symbol.to_string(), c);
                    }
                    summary.symbol_days_built += 1;
                    built_days.push(SymbolDay {
                        symbol: symbol.to_string(),
                        block,
                    });
                }
                None => summary.untradable += 1,
            }
        }
        days.push(DayBars::new(date, MINUTES_PER_SESSION, built_days));
    }
    (days, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn map(changes: &[(&str, &str, &str)], excl: &[&str]) -> Result<SymbolMap> {
        SymbolMap::new(
            changes
                .iter()
                .map(|(e, o, n)| SymbolChange {
                    effective_date: d(e),
                    old_symbol: o.to_string(),
                    new_symbol: n.to_string(),
                })
                .collect(),
            excl.iter().map(|s| s.to_string()),
        )
    }

    const HEADER: &str = "timestamp,symbol,price,size,exchange\n";

    #[test]
    fn excluded_symbols_are_counted_and_omitted() {
        let csv = format!(
            "{HEADER}2005-03-01T09:30:05-05:00,SPY,120.00,100,P\n2005-03-01T09:30:05-05:00,IBM,90.00,100,N\n"
        );
        let m = map(&[], &["SPY"]).unwrap();
        let (recs, stats) = ingest_trades([csv.as_bytes()], &m).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].symbol, "IBM");
        assert_eq!(stats.excluded, 1);
        assert_eq!(stats.rows, 2);
    }

    #[test]
    fn old_symbol_is_renamed() {
        let csv = format!("{HEADER}2005-03-01T09:30:05-05:00,ABC,10.00,100,N\n");
        let m = map(&[("2005-06-01", "ABC", "ABCD")], &[]).unwrap();
        let (recs, _) = ingest_trades([csv.as_bytes()], &m).unwrap();
        assert_eq!(recs[0].symbol, "ABCD");
        // a later reuse of the old ticker is left alone
        assert_eq!(m.resolve("ABC", d("2005-07-01")).unwrap(), "ABC");
    }

    #[test]
    fn chains_are_followed() {
        let m = map(&[("2005-01-01", "A", "B"), ("2006-01-01", "B", "C")], &[]).unwrap();
        assert_eq!(m.resolve("A", d("2004-06-01")).unwrap(), "C");
        assert_eq!(m.resolve("B", d("2005-06-01")).unwrap(), "C");
        assert_eq!(m.resolve("B", d("2006-06-01")).unwrap(), "B");
    }

    #[test]
    fn mapping_cycle_is_fatal() {
        let err = map(&[("2005-01-01", "A", "B"), ("2005-01-01", "B", "A")], &[]).unwrap_err();
        assert!(matches!(err, Error::SymbolCycle { .. }));
    }

    #[test]
    fn malformed_rows_are_counted() {
        let csv = format!(
            "{HEADER}2005-03-01T09:30:05-05:00,ABC,0.00,100,N\n\
             not-a-time,ABC,1.00,100,N\n\
             2005-03-01T09:30:05-05:00,ABC,1.00,0,N\n\
             2005-03-01T09:30:05-05:00,ABC,1.00\n\
             2005-03-01T09:30:06-05:00,ABC,1.00,10,N\n"
        );
        let (recs, stats) = ingest_trades([csv.as_bytes()], &SymbolMap::default()).unwrap();
        assert_eq!(stats.malformed, 4);
        assert_eq!(stats.accepted, 1);
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn wrong_header_is_fatal() {
        let csv = "time,sym,px,qty,ex\n";
        assert!(ingest_trades([csv.as_bytes()], &SymbolMap::default()).is_err());
    }

    #[test]
    fn output_sorted_by_symbol_then_time() {
        let csv = format!(
            "{HEADER}2005-03-01T09:31:00-05:00,BBB,1.00,1,N\n\
             2005-03-01T09:30:00-05:00,BBB,1.00,1,N\n\
             2005-03-01T09:35:00-05:00,AAA,1.00,1,N\n"
        );
        let (recs, _) = ingest_trades([csv.as_bytes()], &SymbolMap::default()).unwrap();
        let keys: Vec<_> = recs.iter().map(|r| (r.symbol.as_str(), r.timestamp.to_rfc3339())).collect();
        assert_eq!(keys[0].0, "AAA");
        assert!(keys[1].1 < keys[2].1);
    }

    #[test]
    fn days_chain_prior_close() {
        let csv = format!(
            "{HEADER}2005-03-01T09:30:00-05:00,AAA,10.00,1,N\n\
             2005-03-01T15:59:00-05:00,AAA,11.00,1,N\n\
             2005-03-02T10:00:00-05:00,AAA,12.00,1,N\n\
             2005-03-02T10:00:00-05:00,BBB,12.00,1,N\n\
             2005-03-05T10:00:00-05:00,AAA,12.00,1,N\n"
        );
        let (recs, _) = ingest_trades([csv.as_bytes()], &SymbolMap::default()).unwrap();
        let (days, summary) = bars_from_trades(&recs, |_, _| None, &BTreeSet::new());
        assert_eq!(days.len(), 2);
        assert_eq!(summary.symbol_days_built, 2);
        assert_eq!(summary.untradable, 1); // BBB has no prior close
        assert_eq!(summary.off_calendar, 1); // Saturday
        let day2 = days[1].get("AAA").unwrap();
        assert_eq!(day2.close[0], Price(110_000));
        assert_eq!(day2.close[30], Price(120_000));
    }
}
