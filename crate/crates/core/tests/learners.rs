use intraeff::dataset::{Direction, Hyperparams};
use intraeff::learners::{
    self, decode_model, encode_model, train_network, Examples, LearnerConfig, LearnerKind, LogisticModel, Model,
    Network, NetworkSpec, NnConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Independent forward pass returning every hidden pre-activation and the
/// mean cross-entropy, written directly from the layer equations.
fn oracle_forward(sizes: &[usize], params: &[f64], x: &[f64], y: &[bool]) -> (Vec<f64>, f64) {
    let rows = y.len();
    let mut pre = Vec::new();
    let mut loss = 0.0;
    for r in 0..rows {
        let mut a: Vec<f64> = x[r * sizes[0]..(r + 1) * sizes[0]].to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let w = &params[off..off + i * o];
            let b = &params[off + i * o..off + i * o + o];
            off += i * o + o;
            let z: Vec<f64> = (0..o).map(|j| b[j] + (0..i).map(|k| a[k] * w[k * o + j]).sum::<f64>()).collect();
            if l + 2 < sizes.len() {
                pre.extend_from_slice(&z);
                a = z.iter().map(|v| v.max(0.0)).collect();
            } else {
                a = z;
            }
        }
        let denom = a[0].exp() + a[1].exp();
        let p_true = if y[r] { a[0].exp() } else { a[1].exp() } / denom;
        loss -= p_true.ln();
    }
    (pre, loss / rows as f64)
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-5)
}

/// Random [5, 4, 3, 2] instance with no hidden pre-activation near a ReLU kink,
/// so the central difference never straddles one.
fn smooth_instance(seed: u64) -> (Network, Vec<f64>, Vec<bool>) {
    let sizes = [5, 4, 3, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut net = Network::init(NetworkSpec::from_sizes(sizes.to_vec()).unwrap(), rng.random());
        for p in net.params.iter_mut() {
            *p += 0.2 * normal(&mut rng);
        }
        let rows = rng.random_range(1..=8);
        let x: Vec<f64> = (0..rows * 5).map(|_| normal(&mut rng)).collect();
        let y: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        let (pre, _) = oracle_forward(&sizes, &net.params, &x, &y);
        if pre.iter().all(|z| z.abs() > 1e-3) {
            return (net, x, y);
        }
    }
}

#[test]
fn network_gradient_matches_central_differences() {
    let h = 1e-5;
    for case in 0..100 {
        let (net, x, y) = smooth_instance(1000 + case);
        let (loss, grad) = net.loss_and_gradient(&x, &y).unwrap();
        let (_, oracle_loss) = oracle_forward(net.spec.sizes(), &net.params, &x, &y);
        assert!((loss - oracle_loss).abs() < 1e-12, "case {case}: loss {loss} vs {oracle_loss}");
        for i in 0..net.params.len() {
            let mut plus = net.params.clone();
            let mut minus = net.params.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = oracle_forward(net.spec.sizes(), &plus, &x, &y).1;
            let fm = oracle_forward(net.spec.sizes(), &minus, &x, &y).1;
            let numeric = (fp - fm) / (2.0 * h);
            assert!(
                close_rel(grad[i], numeric, 1e-5),
                "case {case} coord {i}: analytic {} numeric {numeric}",
                grad[i]
            );
        }
    }
}

fn oracle_logistic_objective(w: &[f64], b: f64, x: &[f64], y: &[bool], lambda: f64) -> f64 {
    let cols = w.len();
    let mut total = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let z = b + (0..cols).map(|k| w[k] * x[r * cols + k]).sum::<f64>();
        let p = 1.0 / (1.0 + (-z).exp());
        total -= if label { p.ln() } else { (1.0 - p).ln() };
    }
    total / y.len() as f64 + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let cols = rng.random_range(1..=6);
        let rows = rng.random_range(1..=10);
        let lambda = 10f64.powf(rng.random_range(-4.0..0.0));
        let model = LogisticModel {
            weights: (0..cols).map(|_| normal(&mut rng)).collect(),
            bias: normal(&mut rng),
        };
        let x: Vec<f64> = (0..rows * cols).map(|_| normal(&mut rng)).collect();
        let y: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        let (obj, grad) = model.objective_and_gradient(&x, &y, lambda).unwrap();
        let oracle = oracle_logistic_objective(&model.weights, model.bias, &x, &y, lambda);
        assert!((obj - oracle).abs() < 1e-12);
        for i in 0..=cols {
            let eval = |d: f64| {
                let mut w = model.weights.clone();
                let mut b = model.bias;
                if i < cols {
                    w[i] += d;
                } else {
                    b += d;
                }
                oracle_logistic_objective(&w, b, &x, &y, lambda)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            assert!(
                close_rel(grad[i], numeric, 1e-6),
                "case {case} coord {i}: analytic {} numeric {numeric}",
                grad[i]
            );
        }
    }
}

fn toy_problem(rows: usize, cols: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..cols).map(|_| normal(&mut rng)).collect();
    let mut x = Vec::with_capacity(rows * cols);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| normal(&mut rng)).collect();
        let score: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + normal(&mut rng);
        x.extend_from_slice(&row);
        y.push(score > 0.0);
    }
    (x, y)
}

#[test]
fn full_batch_training_loss_is_non_increasing_with_a_small_step() {
    let (x, y) = toy_problem(64, 6, 3);
    let ex = Examples::new(&x, 6, &y).unwrap();
    let cfg = NnConfig {
        hidden: vec![8, 4],
        learning_rate: 1e-4,
        batch_size: 64,
        max_epochs: 60,
        patience: 1000,
        min_delta: 0.0,
        standardize: false,
        ..NnConfig::default()
    };
    let (_, _, report) = train_network(&ex, &ex, 4, &cfg).unwrap();
    assert_eq!(report.epochs, 60);
    // with one batch per epoch, the validation loss on the same rows is the
    // full-batch training loss after each step
    for w in report.validation_losses.windows(2) {
        assert!(w[1] <= w[0], "loss rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn early_stopping_returns_the_best_validation_epoch() {
    let (xt, yt) = toy_problem(300, 20, 8);
    let (xv, yv) = toy_problem(60, 20, 9);
    let train = Examples::new(&xt, 20, &yt).unwrap();
    let valid = Examples::new(&xv, 20, &yv).unwrap();
    let cfg = NnConfig {
        hidden: vec![40, 10],
        learning_rate: 1e-2,
        batch_size: 32,
        ..NnConfig::default()
    };
    let (net, st, report) = train_network(&train, &valid, 21, &cfg).unwrap();
    let min = report.validation_losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_validation_loss, min);
    assert_eq!(report.validation_losses[report.best_epoch - 1], min);
    let returned = net.loss(&st.apply(&xv), &yv).unwrap();
    assert!((returned - min).abs() < 1e-12);
    // training stopped because patience ran out, not at the epoch cap
    assert!(report.epochs < cfg.max_epochs);
    assert!(report.epochs >= report.best_epoch + 1);
}

#[test]
fn network_training_is_deterministic_per_seed() {
    let (x, y) = toy_problem(120, 10, 1);
    let ex = Examples::new(&x, 10, &y).unwrap();
    let cfg = NnConfig {
        hidden: vec![12, 6],
        max_epochs: 15,
        ..NnConfig::default()
    };
    let a = train_network(&ex, &ex, 5, &cfg).unwrap().0;
    let b = train_network(&ex, &ex, 5, &cfg).unwrap().0;
    let c = train_network(&ex, &ex, 6, &cfg).unwrap().0;
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
}

fn hp() -> Hyperparams {
    Hyperparams::new(-5, 2).unwrap()
}

#[test]
fn random_control_follows_the_training_class_balance() {
    let y: Vec<bool> = (0..1000).map(|i| i % 10 < 3).collect();
    let x = vec![0.0; 1000];
    let ex = Examples::new(&x, 1, &y).unwrap();
    let model = learners::train(LearnerKind::Random, Direction::Up, hp(), &ex, &ex, 42, &LearnerConfig::default()).unwrap();
    assert_eq!(model.model, Model::Random { p: 0.3 });
    let batch = vec![0.0; 10_000];
    let pred = model.predict(&batch, 7).unwrap();
    let frac = pred.classes.iter().filter(|&&c| c).count() as f64 / 10_000.0;
    let bound = 3.0 * (0.3f64 * 0.7 / 10_000.0).sqrt();
    assert!((frac - 0.3).abs() <= bound, "fraction {frac}, bound {bound}");
    // pure in (model, batch key); different keys give different draws
    assert_eq!(model.predict(&batch, 7).unwrap(), pred);
    assert_ne!(model.predict(&batch, 8).unwrap().classes, pred.classes);
}

#[test]
fn random_control_with_no_positives_never_predicts_positive() {
    let y = vec![false; 50];
    let x = vec![1.0; 50];
    let ex = Examples::new(&x, 1, &y).unwrap();
    let model = learners::train(LearnerKind::Random, Direction::Down, hp(), &ex, &ex, 1, &LearnerConfig::default()).unwrap();
    assert!(model.predict(&[0.0; 500], 3).unwrap().classes.iter().all(|&c| !c));
}

#[test]
fn gradient_learners_reject_single_class_sets() {
    let y = vec![true; 20];
    let x = vec![1.0; 40];
    let ex = Examples::new(&x, 2, &y).unwrap();
    for kind in [LearnerKind::Neural, LearnerKind::Logistic] {
        let err = learners::train(kind, Direction::Up, hp(), &ex, &ex, 1, &LearnerConfig::default()).unwrap_err();
        assert!(matches!(err, intraeff::Error::SingleClass { .. }), "{kind}: {err}");
    }
}

#[test]
fn predictions_reject_width_mismatch() {
    let (x, y) = toy_problem(40, 4, 2);
    let ex = Examples::new(&x, 4, &y).unwrap();
    for kind in LearnerKind::ALL {
        let model = learners::train(kind, Direction::Up, hp(), &ex, &ex, 1, &small_config()).unwrap();
        assert!(model.predict(&[0.0; 7], 0).is_err(), "{kind}");
        assert_eq!(model.predict(&x, 0).unwrap().classes.len(), 40);
    }
}

fn small_config() -> LearnerConfig {
    let mut cfg = LearnerConfig::default();
    cfg.neural.hidden = vec![6, 3];
    cfg.neural.max_epochs = 5;
    cfg
}

#[test]
fn model_files_round_trip_exactly() {
    let (x, y) = toy_problem(50, 4, 6);
    let ex = Examples::new(&x, 4, &y).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in LearnerKind::ALL {
        let model = learners::train(kind, Direction::Down, hp(), &ex, &ex, 9, &small_config()).unwrap();
        let path = dir.path().join(format!("{kind}.model"));
        learners::save_model(&path, &model).unwrap();
        let back = learners::load_model(&path).unwrap();
        // NaN losses compare unequal, so compare encodings
        assert_eq!(encode_model(&back), encode_model(&model));
        assert_eq!(back.model, model.model);
        assert_eq!(back.predict(&x, 3).unwrap(), model.predict(&x, 3).unwrap());
    }
    let fallback = learners::no_trade(LearnerKind::Neural, Direction::Up, hp(), &ex, 1);
    let bytes = encode_model(&fallback);
    assert_eq!(decode_model(&bytes).unwrap().model, Model::NoTrade);
    assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_model(&bad).is_err());
}
