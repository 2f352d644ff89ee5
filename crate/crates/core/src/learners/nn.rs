//! Fully connected ReLU network with a two-way softmax output.
//!
//! Parameters live in one flat vector, layer by layer: the `fan_in × fan_out`
//! weight matrix (row-major) followed by `fan_out` biases. Output unit 0 is
//! the positive class.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, OptimizerState};
use super::standardize::Standardizer;
use super::Examples;
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::seed::derive_seed;

pub const HIDDEN_SIZES: [usize; 2] = [180, 20];
pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub standardize: bool,
}

impl Default for NnConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        NnConfig {
            hidden: HIDDEN_SIZES.to_vec(),
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 256,
            max_epochs: 200,
            patience: 5,
            min_delta: 1e-4,
            standardize: true,
        }
    }
}

impl NnConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("neural: {m}")));
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be non-negative");
        }
        Ok(())
    }
}

/// Layer widths from input to the two softmax outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: Range<usize>,
    b: Range<usize>,
}

impl NetworkSpec {
    pub fn new(input: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(OUTPUTS);
        NetworkSpec::from_sizes(sizes)
    }

    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || sizes.last() != Some(&OUTPUTS) {
            return Err(Error::Invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(NetworkSpec { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer(&self, l: usize) -> Layer {
        let offset: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = offset..offset + fan_in * fan_out;
        let b = w.end..w.end + fan_out;
        Layer { fan_in, fan_out, w, b }
    }

    /// Range of the flat parameter vector holding layer `l`'s weights.
    pub fn weight_range(&self, l: usize) -> Range<usize> {
        self.layer(l).w
    }

    pub fn bias_range(&self, l: usize) -> Range<usize> {
        self.layer(l).b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
}

/// Reusable activation buffers. `acts[l]` is layer `l`'s output: ReLU
/// activations for hidden layers, logits for the last.
#[derive(Debug, Default)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Network {
    pub fn zeros(spec: NetworkSpec) -> Self {
        let params = vec![0.0; spec.param_count()];
        Network { spec, params }
    }

    /// Uniform fan-in scaled weights, `U(±√(6 / fan_in))`, and zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut net = Network::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.spec.layers() {
            let layer = net.spec.layer(l);
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            for p in &mut net.params[layer.w] {
                *p = rng.random_range(-bound..bound);
            }
        }
        net
    }

    fn check_width(&self, x: &[f64], rows: usize) -> Result<()> {
        let cols = self.spec.input_size();
        if x.len() != rows * cols {
            return Err(Error::Shape {
                expected: cols,
                actual: if rows == 0 { x.len() } else { x.len() / rows },
            });
        }
        Ok(())
    }

    fn forward_into(&self, x: &[f64], rows: usize, ws: &mut Workspace) -> Result<()> {
        let layers = self.spec.layers();
        ws.acts.resize_with(layers, Vec::new);
        for l in 0..layers {
            let layer = self.spec.layer(l);
            let (before, rest) = ws.acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
            let out = &mut rest[0];
            out.clear();
            out.resize(rows * layer.fan_out, 0.0);
            let bias = &self.params[layer.b.clone()];
            for row in out.chunks_exact_mut(layer.fan_out) {
                row.copy_from_slice(bias);
            }
            gemm(
                false,
                false,
                rows,
                layer.fan_in,
                layer.fan_out,
                1.0,
                input,
                &self.params[layer.w.clone()],
                1.0,
                out,
            );
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        if ws.acts[layers - 1].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network activations"));
        }
        Ok(())
    }

    /// Softmax probabilities, `rows × 2` row-major.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rows = x.len() / self.spec.input_size();
        self.check_width(x, rows)?;
        let mut ws = Workspace::default();
        self.forward_into(x, rows, &mut ws)?;
        let mut out = ws.acts.pop().unwrap_or_default();
        for row in out.chunks_exact_mut(OUTPUTS) {
            softmax_in_place(row);
        }
        Ok(out)
    }

    /// Mean categorical cross-entropy.
    pub fn loss(&self, x: &[f64], labels: &[bool]) -> Result<f64> {
        self.check_width(x, labels.len())?;
        if labels.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut ws = Workspace::default();
        self.forward_into(x, labels.len(), &mut ws)?;
        let logits = ws.acts.last().expect("at least one layer");
        let total: f64 = logits
            .chunks_exact(OUTPUTS)
            .zip(labels)
            .map(|(z, &y)| cross_entropy(z, y))
            .sum();
        Ok(total / labels.len() as f64)
    }

    /// Mean cross-entropy and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, x: &[f64], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::default();
        let loss = self.gradient_into(x, labels, &mut ws, &mut grad)?;
        Ok((loss, grad))
    }

    fn gradient_into(&self, x: &[f64], labels: &[bool], ws: &mut Workspace, grad: &mut [f64]) -> Result<f64> {
        let rows = labels.len();
        if rows == 0 {
            return Err(Error::Empty("batch"));
        }
        self.check_width(x, rows)?;
        self.forward_into(x, rows, ws)?;
        let layers = self.spec.layers();
        let inv = 1.0 / rows as f64;

        let mut loss = 0.0;
        ws.delta.clear();
        for (z, &y) in ws.acts[layers - 1].chunks_exact(OUTPUTS).zip(labels) {
            loss += cross_entropy(z, y);
            let mut p = [z[0], z[1]];
            softmax_in_place(&mut p);
            let t = if y { [1.0, 0.0] } else { [0.0, 1.0] };
            ws.delta.push((p[0] - t[0]) * inv);
            ws.delta.push((p[1] - t[1]) * inv);
        }

        for l in (0..layers).rev() {
            let layer = self.spec.layer(l);
            let input: &[f64] = if l == 0 { x } else { &ws.acts[l - 1] };
            gemm(
                true,
                false,
                layer.fan_in,
                rows,
                layer.fan_out,
                1.0,
                input,
                &ws.delta,
                0.0,
                &mut grad[layer.w.clone()],
            );
            let gb = &mut grad[layer.b.clone()];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in ws.delta.chunks_exact(layer.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                ws.delta_prev.clear();
                ws.delta_prev.resize(rows * layer.fan_in, 0.0);
                gemm(
                    false,
                    true,
                    rows,
                    layer.fan_out,
                    layer.fan_in,
                    1.0,
                    &ws.delta,
                    &self.params[layer.w.clone()],
                    0.0,
                    &mut ws.delta_prev,
                );
                for (d, a) in ws.delta_prev.iter_mut().zip(&ws.acts[l - 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        Ok(loss * inv)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

fn cross_entropy(z: &[f64], positive: bool) -> f64 {
    let max = z[0].max(z[1]);
    let lse = max + ((z[0] - max).exp() + (z[1] - max).exp()).ln();
    lse - if positive { z[0] } else { z[1] }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
}

/// Mini-batch Adam with early stopping on validation cross-entropy. Returns
/// the parameters from the epoch with the lowest validation loss.
pub fn train_network(
    train: &Examples,
    valid: &Examples,
    seed: u64,
    config: &NnConfig,
) -> Result<(Network, Standardizer, TrainReport)> {
    config.validate()?;
    train.require_both_classes()?;
    if valid.rows() == 0 {
        return Err(Error::Empty("validation set"));
    }
    if valid.cols != train.cols {
        return Err(Error::Shape {
            expected: train.cols,
            actual: valid.cols,
        });
    }
    let cols = train.cols;
    let standardizer = if config.standardize {
        Standardizer::fit(train.x, cols)
    } else {
        Standardizer::identity(cols)
    };
    let xs = standardizer.apply(train.x);
    let xv = standardizer.apply(valid.x);

    let spec = NetworkSpec::new(cols, &config.hidden)?;
    let mut net = Network::init(spec, derive_seed(seed, &[0]));
    let mut optimizer = OptimizerState::new(config.adam(), net.params.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));

    let rows = train.rows();
    let batch = config.batch_size.min(rows);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut bx = Vec::with_capacity(batch * cols);
    let mut by = Vec::with_capacity(batch);
    let mut grad = vec![0.0; net.params.len()];
    let mut ws = Workspace::default();

    let mut report = TrainReport {
        best_validation_loss: f64::INFINITY,
        ..TrainReport::default()
    };
    let mut best_params = net.params.clone();
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(&xs[i * cols..(i + 1) * cols]);
                by.push(train.labels[i]);
            }
            let loss = net
                .gradient_into(&bx, &by, &mut ws, &mut grad)
                .map_err(|_| Error::Diverged { epoch, loss: f64::NAN })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            optimizer.update(&mut net.params, &grad);
        }
        let val = net.loss(&xv, valid.labels).map_err(|_| Error::Diverged { epoch, loss: f64::NAN })?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch, loss: val });
        }
        report.epochs = epoch;
        report.train_losses.push(epoch_loss / rows as f64);
        report.validation_losses.push(val);

        let improvement = report.best_validation_loss - val;
        if val < report.best_validation_loss {
            report.best_validation_loss = val;
            report.best_epoch = epoch;
            best_params.copy_from_slice(&net.params);
        }
        if improvement > config.min_delta {
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    net.params = best_params;
    Ok((net, standardizer, report))
}
