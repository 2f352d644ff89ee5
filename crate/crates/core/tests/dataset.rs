use std::sync::Arc;

use chrono::NaiveDate;
use intraeff::bars::BarSource;
use intraeff::dataset::{build_dataset, read_dataset, write_dataset, Direction, Hyperparams};
use intraeff::synth::{SynthConfig, SynthMarket};
use intraeff::universe::UniverseDay;

fn market() -> SynthMarket {
    SynthMarket::new(SynthConfig {
        seed: 17,
        n_symbols: 12,
        n_days: 6,
        start: NaiveDate::from_ymd_opt(2003, 3, 3).unwrap(),
        ..SynthConfig::default()
    })
    .unwrap()
}

/// A fixed, deliberately unsorted universe that includes a symbol with no bars.
fn members() -> Vec<String> {
    ["S0007", "S0002", "MISSING", "S0011", "S0000", "S0005"].map(String::from).to_vec()
}

fn universe(date: NaiveDate) -> Arc<UniverseDay> {
    Arc::new(UniverseDay {
        date,
        symbols: members(),
        dollar_volume_ticks: vec![0; members().len()],
        target_size: members().len(),
    })
}

fn growth(returns: &[f64], from: usize, to: usize) -> f64 {
    (from + 1..=to).map(|m| 1.0 + returns[m]).product::<f64>() - 1.0
}

struct Expected {
    symbol: String,
    observation: Vec<f64>,
    rel_forward: f64,
}

/// Example rows recomputed from raw bars by explicit compounding.
fn oracle(source: &SynthMarket, date: NaiveDate, end_x: i32) -> Vec<Expected> {
    let day = source.day(date).unwrap().unwrap();
    let present: Vec<(String, Vec<f64>)> = members()
        .into_iter()
        .filter_map(|s| day.get(&s).map(|b| (s, b.closes_f64().collect())))
        .collect();
    let n = day.minutes;
    let ret = |c: &[f64]| -> Vec<f64> { (0..n).map(|m| if m == 0 { 0.0 } else { c[m] / c[m - 1] - 1.0 }).collect() };
    let mut mean = vec![0.0; n];
    for (_, c) in &present {
        for (acc, r) in mean.iter_mut().zip(ret(c)) {
            *acc += r / present.len() as f64;
        }
    }
    let e = (n as i32 + end_x - 1) as usize;
    present
        .iter()
        .map(|(s, c)| {
            let r = ret(c);
            Expected {
                symbol: s.clone(),
                observation: (0..=e).map(|k| growth(&mean, k, e) - growth(&r, k, e)).collect(),
                rel_forward: (c[n - 1] / c[e + 1] - 1.0) - growth(&mean, e + 1, n - 1),
            }
        })
        .collect()
}

#[test]
fn built_examples_match_recomputation_from_bars() {
    let m = market();
    let dates = m.trading_days().to_vec();
    for hp in [Hyperparams::new(-5, 2).unwrap(), Hyperparams::new(-30, 25).unwrap()] {
        for dir in Direction::BOTH {
            let ds = build_dataset(&dates, &m, &universe, hp, dir).unwrap();
            let mut row = 0;
            for &date in &dates {
                for want in oracle(&m, date, hp.end_x) {
                    assert_eq!(ds.features.dates[row], date);
                    assert_eq!(ds.features.symbols[row], want.symbol);
                    let got = ds.features.row(row);
                    assert_eq!(got.len(), want.observation.len());
                    assert_eq!(got[got.len() - 1], 0.0);
                    // a 390-factor product carries ~n·ε of rounding relative to the growth factor
                    for (g, w) in got.iter().zip(&want.observation) {
                        assert!((g - w).abs() <= 1e-12, "{date} {}: {g} vs {w}", want.symbol);
                    }
                    assert!((ds.features.rel_forward[row] - want.rel_forward).abs() < 1e-12);
                    let t = hp.bps as f64 / 1e4;
                    let positive = match dir {
                        Direction::Up => want.rel_forward > t,
                        Direction::Down => want.rel_forward < -t,
                    };
                    assert_eq!(ds.labels[row], positive);
                    row += 1;
                }
            }
            assert_eq!(row, ds.rows());
            assert_eq!(ds.rows(), dates.len() * (members().len() - 1));
        }
    }
}

#[test]
fn day_ranges_partition_the_rows_in_date_order() {
    let m = market();
    let ds = build_dataset(m.trading_days(), &m, &universe, Hyperparams::new(-10, 5).unwrap(), Direction::Up).unwrap();
    let mut next = 0;
    for (i, (date, range)) in ds.features.day_ranges.iter().enumerate() {
        assert_eq!(*date, m.trading_days()[i]);
        assert_eq!(range.start, next);
        next = range.end;
    }
    assert_eq!(next, ds.rows());
}

#[test]
fn dump_round_trips() {
    let m = market();
    let hp = Hyperparams::new(-10, 10).unwrap();
    let ds = build_dataset(m.trading_days(), &m, &universe, hp, Direction::Down).unwrap();
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &ds).unwrap();
    let (hp2, dir, cols, obs, labels) = read_dataset(bytes.as_slice()).unwrap();
    assert_eq!((hp2, dir, cols), (hp, Direction::Down, ds.features.cols));
    assert_eq!(obs, ds.features.observations);
    assert_eq!(labels, ds.labels);
    assert!(read_dataset(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn an_empty_period_is_an_error() {
    let m = market();
    assert!(build_dataset(&[], &m, &universe, Hyperparams::new(-5, 2).unwrap(), Direction::Up).is_err());
}
