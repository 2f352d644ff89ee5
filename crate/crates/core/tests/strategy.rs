use chrono::NaiveDate;
use intraeff::dataset::{universe_mean_returns, DayPanel};
use intraeff::strategy::{
    allocate, decide, decisions_for_day, realize, write_trade_log, Action, DailyResult, StrategyConfig,
};
use proptest::prelude::*;

const MINUTES: usize = 10;
const END_X: i32 = -3; // last observed minute 6, entry at the close of 7

fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 2, 14).unwrap()
}

fn panel(rows: &[(&str, Vec<f64>)]) -> DayPanel {
    let closes: Vec<f64> = rows.iter().flat_map(|(_, c)| c.clone()).collect();
    DayPanel {
        date: date(),
        minutes: MINUTES,
        symbols: rows.iter().map(|(s, _)| s.to_string()).collect(),
        mean_returns: universe_mean_returns(&closes, MINUTES).unwrap(),
        closes,
        excluded: 0,
    }
}

/// Flat at `entry` through minute 7, then `exit` at minute 9.
fn path(entry: f64, exit: f64) -> Vec<f64> {
    let mut p = vec![entry; MINUTES];
    p[8] = (entry + exit) / 2.0;
    p[9] = exit;
    p
}

fn run(p: &DayPanel, up: &[bool], down: &[bool], cfg: &StrategyConfig) -> DailyResult {
    let decisions = decisions_for_day(p.date, &p.symbols, up, down, 7);
    let portfolio = allocate(p.date, &decisions);
    realize(portfolio, decisions, p, END_X, cfg).unwrap()
}

#[test]
fn decide_is_total_over_the_truth_table() {
    let table = [
        ((true, false), Action::Long),
        ((false, true), Action::Short),
        ((false, false), Action::NoOpinion),
        ((true, true), Action::Conflict),
    ];
    for ((u, d), want) in table {
        assert_eq!(decide(u, d), want);
    }
}

#[test]
fn one_long_one_short_each_earning_a_percent() {
    let p = panel(&[("L", path(100.0, 101.0)), ("S", path(50.0, 49.5))]);
    let r = run(&p, &[true, false], &[false, true], &StrategyConfig::default());
    assert!((r.daily_return_bps - 100.0).abs() < 1e-9);
    assert_eq!(r.positions.len(), 2);
    assert_eq!(r.positions[0].entry_px, 100.0);
    assert_eq!(r.positions[0].exit_px, 101.0);
    // L beat the universe and S lagged it
    assert_eq!(r.trade_precision, Some(1.0));
}

#[test]
fn uniform_move_earns_nothing() {
    let p = panel(&[
        ("A", path(10.0, 10.1)),
        ("B", path(20.0, 20.2)),
        ("C", path(40.0, 40.4)),
    ]);
    let r = run(&p, &[true, true, false], &[false, false, true], &StrategyConfig::default());
    assert!(r.daily_return_bps.abs() < 1e-12);
}

#[test]
fn no_trade_day_is_exactly_zero() {
    let p = panel(&[("A", path(10.0, 11.0)), ("B", path(10.0, 9.0))]);
    let r = run(&p, &[true, true], &[false, false], &StrategyConfig::default());
    assert!(!r.traded());
    assert_eq!(r.daily_return_bps, 0.0);
    assert_eq!(r.trade_precision, None);
    assert!(r.positions.is_empty());
}

#[test]
fn costs_are_charged_per_side_on_traded_capital() {
    let p = panel(&[("L", path(100.0, 101.0)), ("S", path(50.0, 49.5))]);
    let cfg = StrategyConfig {
        cost_bps_per_side: 1.5,
        ..StrategyConfig::default()
    };
    let r = run(&p, &[true, false], &[false, true], &cfg);
    assert!((r.daily_return_bps - 97.0).abs() < 1e-9);
}

#[test]
fn relative_pnl_flag_uses_universe_relative_returns() {
    let p = panel(&[("L", path(100.0, 103.0)), ("S", path(50.0, 50.5))]);
    let abs = run(&p, &[true, false], &[false, true], &StrategyConfig::default());
    let rel = run(
        &p,
        &[true, false],
        &[false, true],
        &StrategyConfig {
            pnl_relative: true,
            ..StrategyConfig::default()
        },
    );
    let want_abs = 10_000.0 * (0.5 * 0.03 - 0.5 * 0.01);
    let want_rel: f64 = rel.positions.iter().map(|p| if p.action == Action::Long { 1.0 } else { -1.0 } * p.weight * p.rel_return).sum::<f64>() * 10_000.0;
    assert!((abs.daily_return_bps - want_abs).abs() < 1e-9);
    assert!((rel.daily_return_bps - want_rel).abs() < 1e-9);
    // a balanced book nets out the universe term either way
    assert!((abs.daily_return_bps - rel.daily_return_bps).abs() < 1e-9);
}

#[test]
fn allocations_missing_bars_are_held_as_cash() {
    let p = panel(&[("L", path(100.0, 101.0)), ("S", path(50.0, 49.5))]);
    let mut decisions = decisions_for_day(date(), &p.symbols, &[true, false], &[false, true], 7);
    decisions.push(intraeff::strategy::TradeDecision {
        symbol: "GONE".into(),
        ..decisions[0].clone()
    });
    let portfolio = allocate(date(), &decisions);
    assert_eq!(portfolio.longs.len(), 2);
    let r = realize(portfolio, decisions, &p, END_X, &StrategyConfig::default()).unwrap();
    assert_eq!(r.positions.len(), 2);
    assert!((r.daily_return_bps - (0.25 * 100.0 + 0.5 * 100.0)).abs() < 1e-9);
}

#[test]
fn trade_log_has_documented_header_and_one_row_per_position() {
    let p = panel(&[("L", path(100.0, 101.0)), ("S", path(50.0, 49.5))]);
    let r = run(&p, &[true, false], &[false, true], &StrategyConfig::default());
    let mut buf = Vec::new();
    write_trade_log(&mut buf, &[r]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "date,symbol,action,weight,entry_px,exit_px,rel_fwd_return_bps,abs_return_bps");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2006-02-14,L,long,0.5,100.0000,101.0000,"));
}

fn arb_day() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<(bool, bool)>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec((1.0f64..500.0, -0.2f64..0.2), n),
            prop::collection::vec(any::<(bool, bool)>(), n),
        )
    })
}

proptest! {
    #[test]
    fn books_are_balanced_and_neutral_to_common_moves((moves, calls) in arb_day(), delta in -0.05f64..0.05, c in 0.5f64..1.5) {
        let names: Vec<String> = (0..moves.len()).map(|i| format!("S{i}")).collect();
        let build = |f: &dyn Fn(f64, f64) -> f64| {
            panel(&names.iter().zip(&moves).map(|(s, &(px, r))| (s.as_str(), path(px, f(px, r)))).collect::<Vec<_>>())
        };
        let up: Vec<bool> = calls.iter().map(|c| c.0).collect();
        let down: Vec<bool> = calls.iter().map(|c| c.1).collect();
        let cfg = StrategyConfig::default();

        let base = run(&build(&|px, r| px * (1.0 + r)), &up, &down, &cfg);
        let p = &base.portfolio;
        prop_assert!(p.is_balanced());
        let long_total: f64 = base.positions.iter().filter(|x| x.action == Action::Long).map(|x| x.weight).sum();
        let short_total: f64 = base.positions.iter().filter(|x| x.action == Action::Short).map(|x| x.weight).sum();
        prop_assert!((long_total - short_total).abs() < 1e-12);
        prop_assert!(p.longs.is_empty() || (long_total - 0.5).abs() < 1e-12);

        // every return shifted by a common amount: the shift cancels
        let shifted = run(&build(&|px, r| px * (1.0 + r + delta)), &up, &down, &cfg);
        prop_assert!((shifted.daily_return_bps - base.daily_return_bps).abs() < 1e-9);

        // a common multiplicative shock to exits contributes no P&L of its own:
        // the shocked book earns c times the unshocked book
        let shocked = run(&build(&|px, r| c * px * (1.0 + r)), &up, &down, &cfg);
        prop_assert!((shocked.daily_return_bps - c * base.daily_return_bps).abs() < 1e-9);

        // and a pure common move earns nothing
        let common = run(&build(&|px, _| c * px), &up, &down, &cfg);
        prop_assert!(common.daily_return_bps.abs() < 1e-12 * 10_000.0);
    }
}
