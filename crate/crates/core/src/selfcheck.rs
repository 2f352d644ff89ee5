//! Fast built-in verifications run by `intraeff selfcheck`.
//!
//! The analytic gradients are taken through [`Hooks`] so a harness can swap
//! in a broken implementation and watch the check fail.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{make_observation, universe_mean_returns, DayPanel};
use crate::error::Result;
use crate::learners::{LogisticModel, Network, NetworkSpec};
use crate::strategy::{allocate, decide, decisions_for_day, realize, Action, StrategyConfig};

pub type NnGradient = dyn Fn(&Network, &[f64], &[bool]) -> Result<(f64, Vec<f64>)> + Sync;
pub type LogisticGradient = dyn Fn(&LogisticModel, &[f64], &[bool], f64) -> Result<(f64, Vec<f64>)> + Sync;

pub struct Hooks<'a> {
    pub nn_gradient: &'a NnGradient,
    pub logistic_gradient: &'a LogisticGradient,
}

impl Default for Hooks<'static> {
    fn default() -> Self {
        Hooks {
            nn_gradient: &|net, x, y| net.loss_and_gradient(x, y),
            logistic_gradient: &|m, x, y, lambda| m.objective_and_gradient(x, y, lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const CHECK_NAMES: [&str; 6] = [
    "nn_gradient",
    "logistic_gradient",
    "decide_truth_table",
    "allocation_balance",
    "market_neutrality",
    "observation_zero_anchor",
];

const INSTANCES: u64 = 20;
const NN_TOLERANCE: f64 = 1e-5;
const LOGISTIC_TOLERANCE: f64 = 1e-6;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Smallest |pre-activation| over all hidden units and rows.
fn min_hidden_preactivation(net: &Network, x: &[f64]) -> f64 {
    let sizes = net.spec.sizes();
    let rows = x.len() / sizes[0];
    let mut min = f64::INFINITY;
    for r in 0..rows {
        let mut a = x[r * sizes[0]..(r + 1) * sizes[0]].to_vec();
        for l in 0..net.spec.layers() - 1 {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let w = &net.params[net.spec.weight_range(l)];
            let b = &net.params[net.spec.bias_range(l)];
            let z: Vec<f64> = (0..o).map(|j| b[j] + (0..i).map(|k| a[k] * w[k * o + j]).sum::<f64>()).collect();
            min = z.iter().fold(min, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    min
}

fn nn_gradient_check(grad: &NnGradient) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < INSTANCES {
        let mut net = Network::init(NetworkSpec::from_sizes(vec![5, 4, 3, 2])?, rng.random());
        for p in net.params.iter_mut() {
            *p += 0.2 * normal(&mut rng);
        }
        let rows = rng.random_range(1..=6);
        let x: Vec<f64> = (0..rows * 5).map(|_| normal(&mut rng)).collect();
        let y: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        if min_hidden_preactivation(&net, &x) <= 1e-3 {
            continue;
        }
        done += 1;
        let (_, g) = grad(&net, &x, &y)?;
        let h = 1e-6;
        for i in 0..net.params.len() {
            let mut p = net.clone();
            p.params[i] += h;
            let up = p.loss(&x, &y)?;
            p.params[i] -= 2.0 * h;
            let down = p.loss(&x, &y)?;
            worst = worst.max(rel_err(g.get(i).copied().unwrap_or(f64::NAN), (up - down) / (2.0 * h)));
        }
    }
    Ok((worst <= NN_TOLERANCE, format!("max relative error {worst:.2e} over {INSTANCES} instances")))
}

fn logistic_gradient_check(grad: &LogisticGradient) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1061);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let cols = rng.random_range(1..=6);
        let rows = rng.random_range(1..=8);
        let model = LogisticModel {
            weights: (0..cols).map(|_| normal(&mut rng)).collect(),
            bias: normal(&mut rng),
        };
        let x: Vec<f64> = (0..rows * cols).map(|_| normal(&mut rng)).collect();
        let y: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        let lambda = 10f64.powf(rng.random_range(-4.0..0.0));
        let (_, g) = grad(&model, &x, &y, lambda)?;
        let h = 1e-6;
        for i in 0..=cols {
            let shifted = |d: f64| {
                let mut m = model.clone();
                if i < cols {
                    m.weights[i] += d;
                } else {
                    m.bias += d;
                }
                m.objective(&x, &y, lambda)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            worst = worst.max(rel_err(g.get(i).copied().unwrap_or(f64::NAN), fd));
        }
    }
    Ok((worst <= LOGISTIC_TOLERANCE, format!("max relative error {worst:.2e} over {INSTANCES} instances")))
}

fn truth_table_check() -> (bool, String) {
    let table = [
        (true, false, Action::Long),
        (false, true, Action::Short),
        (false, false, Action::NoOpinion),
        (true, true, Action::Conflict),
    ];
    let bad: Vec<String> = table
        .iter()
        .filter(|(u, d, want)| decide(*u, *d) != *want)
        .map(|(u, d, _)| format!("({u}, {d})"))
        .collect();
    (bad.is_empty(), if bad.is_empty() { "4 rows".into() } else { format!("wrong: {}", bad.join(" ")) })
}

fn random_panel(rng: &mut ChaCha8Rng, n: usize, minutes: usize) -> Result<DayPanel> {
    let date = NaiveDate::from_ymd_opt(2005, 6, 1).expect("valid date");
    let mut closes = Vec::with_capacity(n * minutes);
    for _ in 0..n {
        let mut px = rng.random_range(5.0..300.0);
        for _ in 0..minutes {
            px *= (0.002 * normal(rng)).exp();
            closes.push(px);
        }
    }
    Ok(DayPanel {
        date,
        minutes,
        symbols: (0..n).map(|i| format!("S{i}")).collect(),
        mean_returns: universe_mean_returns(&closes, minutes)?,
        closes,
        excluded: 0,
    })
}

fn balance_and_neutrality_checks() -> Result<((bool, String), (bool, String))> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xba1);
    let (minutes, end_x) = (40, -6);
    let mut unbalanced = 0;
    let mut worst_shift: f64 = 0.0;
    let days = 200;
    for _ in 0..days {
        let n = rng.random_range(2..15);
        let panel = random_panel(&mut rng, n, minutes)?;
        let up: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let down: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let entry = (minutes as i32 + end_x) as usize;
        let decisions = decisions_for_day(panel.date, &panel.symbols, &up, &down, entry);
        let portfolio = allocate(panel.date, &decisions);
        if !portfolio.is_balanced() {
            unbalanced += 1;
            continue;
        }
        let base = realize(portfolio.clone(), decisions.clone(), &panel, end_x, &StrategyConfig::default())?;

        // every exit scaled by the same factor: relative P&L scales, nothing is added
        let c = rng.random_range(0.8..1.25);
        let mut shocked = panel.clone();
        for row in shocked.closes.chunks_mut(minutes) {
            row[minutes - 1] = c * row[minutes - 1];
        }
        shocked.mean_returns = universe_mean_returns(&shocked.closes, minutes)?;
        let moved = realize(portfolio, decisions, &shocked, end_x, &StrategyConfig::default())?;
        worst_shift = worst_shift.max((moved.daily_return_bps - c * base.daily_return_bps).abs() / 10_000.0);
    }
    Ok((
        (unbalanced == 0, format!("{unbalanced} unbalanced of {days} random days")),
        (
            worst_shift <= 1e-12,
            format!("max deviation {worst_shift:.2e} under a common multiplicative exit shock"),
        ),
    ))
}

fn zero_anchor_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2e70);
    let mut bad = 0;
    let mut total = 0;
    for _ in 0..200 {
        let minutes = rng.random_range(3..60);
        let n = rng.random_range(1..8);
        let panel = random_panel(&mut rng, n, minutes)?;
        let end_x = -(rng.random_range(1..minutes as i32));
        for i in 0..n {
            let obs = make_observation(panel.close_row(i), &panel.mean_returns, end_x)?;
            total += 1;
            if obs.last().copied() != Some(0.0) {
                bad += 1;
            }
        }
    }
    Ok((bad == 0, format!("{bad} of {total} observations without an exact zero at the end")))
}

fn record(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run_selfcheck() -> Vec<CheckResult> {
    run_selfcheck_with(&Hooks::default())
}

/// Runs every check in [`CHECK_NAMES`] order.
pub fn run_selfcheck_with(hooks: &Hooks) -> Vec<CheckResult> {
    let (balance, neutrality) = match balance_and_neutrality_checks() {
        Ok((b, n)) => (Ok(b), Ok(n)),
        Err(e) => {
            let msg = e.to_string();
            (Err(e), Err(crate::error::Error::Invalid(msg)))
        }
    };
    vec![
        record(CHECK_NAMES[0], nn_gradient_check(hooks.nn_gradient)),
        record(CHECK_NAMES[1], logistic_gradient_check(hooks.logistic_gradient)),
        record(CHECK_NAMES[2], Ok(truth_table_check())),
        record(CHECK_NAMES[3], balance),
        record(CHECK_NAMES[4], neutrality),
        record(CHECK_NAMES[5], zero_anchor_check()),
    ]
}
