use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde_json::json;
use sha2::{Digest, Sha256};

use intraeff::analytics::{read_daily_returns, HftRatioSeries, ReturnSeries};
use intraeff::bars::{bars_from_trades, ingest_trades, read_exclusions, BarSource, FileStore, IngestStats, SymbolMap};
use intraeff::learners::save_model;
use intraeff::selfcheck::run_selfcheck;
use intraeff::strategy::write_trade_log;
use intraeff::synth::{describe_market, SynthConfig, SynthMarket};
use intraeff::universe::{write_universe_csv, DollarVolumeIndex, UniverseSelector};
use intraeff::walkforward::{default_split_date, manifest_json, ExperimentConfig, WalkForward};

use crate::report::write_reports;
use crate::{BarsArgs, CliResult, Failure, IngestArgs, ReportArgs, RunArgs, SynthArgs, UniverseArgs};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_all(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// One `YYYY-MM-DD` per line; blank lines, `#` comments and a `date` header
/// are skipped.
fn read_dates(path: &Path) -> CliResult<BTreeSet<NaiveDate>> {
    let text = String::from_utf8(read_all(path)?).map_err(|_| Failure::data(format!("{}: not UTF-8", path.display())))?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.eq_ignore_ascii_case("date") {
            continue;
        }
        let d = line
            .parse()
            .map_err(|_| Failure::data(format!("{}:{}: bad date {line:?}", path.display(), i + 1)))?;
        out.insert(d);
    }
    Ok(out)
}

fn print_ingest_summary(stats: &IngestStats, built: usize, untradable: usize, out_of_session: usize, off_calendar: usize, skipped: usize) {
    println!("rows: {}", stats.rows);
    println!("accepted: {}", stats.accepted);
    println!("malformed: {}", stats.malformed);
    println!("excluded: {}", stats.excluded);
    println!("out_of_session: {out_of_session}");
    println!("off_calendar: {off_calendar}");
    println!("skipped_sessions: {skipped}");
    println!("untradable: {untradable}");
    println!("symbol_days_built: {built}");
}

pub fn ingest(a: IngestArgs) -> CliResult {
    let result = ingest_inner(&a);
    if result.is_err() {
        print_ingest_summary(&IngestStats::default(), 0, 0, 0, 0, 0);
    }
    result
}

fn ingest_inner(a: &IngestArgs) -> CliResult {
    // read every input before touching the store
    let mut files = Vec::with_capacity(a.trades.len());
    for p in &a.trades {
        files.push(read_all(p)?);
    }
    let changes = match &a.symbol_map {
        Some(p) => SymbolMap::changes_from_csv(open(p)?)?,
        None => Vec::new(),
    };
    let exclusions = match &a.exclusions {
        Some(p) => read_exclusions(open(p)?)?,
        None => BTreeSet::new(),
    };
    let early = match &a.early_close {
        Some(p) => read_dates(p)?,
        None => BTreeSet::new(),
    };
    let map = SymbolMap::new(changes, exclusions)?;
    let (records, stats) = ingest_trades(files.iter().map(|f| f.as_slice()), &map)?;

    let store = if a.store.exists() {
        FileStore::open(&a.store)?
    } else {
        FileStore::create(&a.store)?
    };
    let (days, summary) = bars_from_trades(&records, |sym, date| store.prior_close(sym, date, 10).ok().flatten(), &early);
    for day in &days {
        store.write_day(day)?;
    }
    print_ingest_summary(
        &stats,
        summary.symbol_days_built,
        summary.untradable,
        summary.out_of_session,
        summary.off_calendar,
        summary.skipped_dates.len(),
    );
    println!("days_written: {}", days.len());
    Ok(())
}

pub fn bars(a: BarsArgs) -> CliResult {
    let store = FileStore::open(&a.store)?;
    let mut out = output(a.out.as_deref())?;
    let io_err = |e: io::Error| Failure::data(format!("write: {e}"));
    match (a.date, a.symbol) {
        (Some(date), Some(symbol)) => {
            let day = store
                .read_day(date)?
                .ok_or_else(|| Failure::data(format!("no bars for {date}")))?;
            let block = day
                .get(&symbol)
                .ok_or_else(|| Failure::data(format!("{symbol} has no bars on {date}")))?;
            writeln!(out, "minute,open,high,low,close,volume").map_err(io_err)?;
            for b in block.bars() {
                writeln!(out, "{},{},{},{},{},{}", b.minute_index, b.open, b.high, b.low, b.close, b.volume)
                    .map_err(io_err)?;
            }
        }
        _ => {
            let dates = store.dates()?;
            let symbols: BTreeSet<String> = match dates.last() {
                Some(&d) => store
                    .read_day(d)?
                    .map(|day| day.symbols.iter().map(|s| s.symbol.clone()).collect())
                    .unwrap_or_default(),
                None => BTreeSet::new(),
            };
            writeln!(out, "days: {}", dates.len()).map_err(io_err)?;
            if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
                writeln!(out, "first: {first}\nlast: {last}").map_err(io_err)?;
            }
            writeln!(out, "symbols_on_last_day: {}", symbols.len()).map_err(io_err)?;
            writeln!(out, "fingerprint: {}", store.fingerprint()?).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn universe(a: UniverseArgs) -> CliResult {
    if a.size == 0 || a.window_months == 0 {
        return Err(Failure::usage("--size and --window-months must be positive"));
    }
    let store = FileStore::open(&a.store)?;
    let exclusions = match &a.exclusions {
        Some(p) => read_exclusions(open(p)?)?,
        None => BTreeSet::new(),
    };
    let selector =
        UniverseSelector::new(DollarVolumeIndex::build(&store, a.window_months)?, a.size).with_exclusions(exclusions);
    let to = a.to.unwrap_or(a.date);
    let calendar = store.calendar()?;
    let days: Vec<_> = calendar
        .days()
        .iter()
        .filter(|&&d| d >= a.date && d <= to)
        .map(|&d| selector.select(d))
        .collect();
    if days.is_empty() {
        return Err(Failure::data(format!("no trading days in the store between {} and {to}", a.date)));
    }
    let out = output(a.out.as_deref())?;
    write_universe_csv(out, &days)?;
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult {
    let mut cfg = SynthConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let market = SynthMarket::new(cfg)?;
    let store = FileStore::create(&a.store)?;
    let days = market.write_store(&store)?;
    println!("days_written: {days}");
    println!("symbols: {}", market.symbols().len());
    if let Some(path) = &a.trades {
        let rows = market.write_trades_csv(output(Some(path))?, market.trading_days())?;
        println!("trade_rows: {rows}");
    }
    let report = describe_market(&market)?;
    println!("{}", report.summary());
    if let Some(path) = &a.out {
        let json = serde_json::to_vec_pretty(&json!({
            "config": market.config(),
            "report": report,
        }))
        .expect("report serializes");
        write_file(path, &json)?;
    }
    Ok(())
}

fn split_notice(configured: Option<NaiveDate>) -> NaiveDate {
    configured.unwrap_or_else(|| {
        let d = default_split_date();
        eprintln!("notice: no split date configured; using {d}");
        d
    })
}

fn load_hft(path: Option<&Path>) -> CliResult<Option<(HftRatioSeries, String)>> {
    match path {
        Some(p) => {
            let bytes = read_all(p)?;
            Ok(Some((HftRatioSeries::read_csv(bytes.as_slice())?, sha256_hex(&bytes))))
        }
        None => Ok(None),
    }
}

pub fn run(a: RunArgs) -> CliResult {
    let config_bytes = read_all(&a.config)?;
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(w) = a.workers {
        cfg.experiment.workers = w;
    }
    if a.pnl_relative {
        cfg.strategy.pnl_relative = true;
    }
    if a.split_date.is_some() {
        cfg.experiment.split_date = a.split_date;
    }
    cfg.validate()?;
    let split = split_notice(cfg.experiment.split_date);
    let hft = load_hft(a.hft_file.as_deref())?;

    let store = FileStore::open(&a.store)?;
    let wf = WalkForward::new(&store, cfg)?;
    let result = wf.run()?;

    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut series = Vec::new();
    for run in &result.runs {
        let name = format!("trades_{}.csv", run.kind);
        let mut buf = Vec::new();
        write_trade_log(&mut buf, &run.days)?;
        write_file(&a.out.join(&name), &buf)?;
        outputs.push(name);

        let model_dir = a.out.join("models").join(run.kind.name());
        create_dir(&model_dir)?;
        for m in &run.months {
            for (model, dir) in [(&m.up, "up"), (&m.down, "down")] {
                let name = format!("{}_{dir}.iemd", m.layout.test);
                save_model(&model_dir.join(&name), model)?;
                outputs.push(format!("models/{}/{name}", run.kind.name()));
            }
        }
        series.push(ReturnSeries::from_results(run.kind.name(), &run.days)?);
        let traded = run.days.iter().filter(|d| d.traded()).count();
        let degenerate = run.months.iter().filter(|m| m.degenerate).count();
        println!(
            "{}: {} test months ({} degenerate), {} days, {} traded",
            run.kind,
            run.months.len(),
            degenerate,
            run.days.len(),
            traded
        );
    }
    outputs.extend(write_reports(&a.out, &series, split, hft.as_ref().map(|h| &h.0))?.into_iter().map(String::from));

    let mut checksums = serde_json::Map::new();
    for name in &outputs {
        checksums.insert(name.clone(), json!(sha256_hex(&read_all(&a.out.join(name))?)));
    }
    let extra = json!({
        "command": "run",
        "seed": result.config.experiment.seed,
        "workers": result.config.experiment.workers,
        "inputs": {
            "config": { "path": a.config, "sha256": sha256_hex(&config_bytes) },
            "store": { "path": a.store, "fingerprint": result.fingerprint },
            "hft_file": hft.as_ref().map(|h| json!({ "path": a.hft_file, "sha256": h.1 })),
        },
        "outputs": checksums,
    });
    let manifest = serde_json::to_vec_pretty(&manifest_json(&result, extra)).expect("manifest serializes");
    write_file(&a.out.join("manifest.json"), &manifest)?;
    println!("wrote {} files and manifest.json to {}", outputs.len(), a.out.display());
    Ok(())
}

pub fn report(a: ReportArgs) -> CliResult {
    let series = read_daily_returns(open(&a.out.join("daily_returns.csv"))?)?;
    let from_manifest = fs::read(a.out.join("manifest.json"))
        .ok()
        .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
        .and_then(|v| v.get("split_date").and_then(|d| d.as_str()).and_then(|d| d.parse().ok()));
    let split = split_notice(a.split_date.or(from_manifest));
    let hft = load_hft(a.hft_file.as_deref())?;
    let written = write_reports(&a.out, &series, split, hft.as_ref().map(|h| &h.0))?;
    println!("wrote {} to {}", written.join(", "), a.out.display());
    Ok(())
}

pub fn selfcheck() -> CliResult {
    let results = run_selfcheck();
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Failure::check(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}
