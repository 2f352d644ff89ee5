//! Binomial logistic regression with an L2 penalty on the weights.
//!
//! The objective is the mean negative log-likelihood plus `λ‖w‖²`; the bias
//! is not penalized.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, OptimizerState};
use super::standardize::Standardizer;
use super::Examples;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, gemm, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Damped Newton steps with backtracking on the objective.
    Newton,
    /// Full-batch Adam.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub lambda: f64,
    pub solver: Solver,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub standardize: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1e-3,
            solver: Solver::Newton,
            learning_rate: 1e-2,
            tolerance: 1e-6,
            max_iters: 1000,
            standardize: true,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.learning_rate > 0.0) || !(self.tolerance > 0.0) || self.max_iters == 0 {
            return Err(Error::Config(
                "logistic: lambda must be >= 0; learning_rate, tolerance and max_iters > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Weights followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn zeros(cols: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; cols],
            bias: 0.0,
        }
    }

    pub fn cols(&self) -> usize {
        self.weights.len()
    }

    fn theta(&self) -> Vec<f64> {
        let mut t = self.weights.clone();
        t.push(self.bias);
        t
    }

    fn from_theta(mut theta: Vec<f64>) -> Self {
        let bias = theta.pop().unwrap_or(0.0);
        LogisticModel { weights: theta, bias }
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cols = self.cols();
        if cols == 0 || x.len() % cols != 0 {
            return Err(Error::Shape {
                expected: cols,
                actual: x.len(),
            });
        }
        let rows = x.len() / cols;
        let mut z = vec![self.bias; rows];
        gemm(false, false, rows, cols, 1, 1.0, x, &self.weights, 1.0, &mut z);
        Ok(z)
    }

    /// Positive-class probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn objective(&self, x: &[f64], labels: &[bool], lambda: f64) -> Result<f64> {
        let z = self.logits(x)?;
        if z.len() != labels.len() || z.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let nll: f64 = z
            .iter()
            .zip(labels)
            .map(|(&z, &y)| softplus(z) - if y { z } else { 0.0 })
            .sum::<f64>()
            / z.len() as f64;
        Ok(nll + lambda * dot(&self.weights, &self.weights))
    }

    /// Objective and gradient; the gradient is laid out as weights then bias.
    pub fn objective_and_gradient(&self, x: &[f64], labels: &[bool], lambda: f64) -> Result<(f64, Vec<f64>)> {
        let z = self.logits(x)?;
        if z.len() != labels.len() || z.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = z.len() as f64;
        let cols = self.cols();
        let residual: Vec<f64> = z
            .iter()
            .zip(labels)
            .map(|(&z, &y)| (sigmoid(z) - if y { 1.0 } else { 0.0 }) / n)
            .collect();
        let mut grad = vec![0.0; cols + 1];
        gemm(true, false, cols, z.len(), 1, 1.0, x, &residual, 0.0, &mut grad[..cols]);
        for (g, w) in grad.iter_mut().zip(&self.weights) {
            *g += 2.0 * lambda * w;
        }
        grad[cols] = residual.iter().sum();
        let obj = self.objective(x, labels, lambda)?;
        Ok((obj, grad))
    }
}

/// Convergence record for a logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticReport {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

pub fn train_logistic(
    train: &Examples,
    config: &LogisticConfig,
) -> Result<(LogisticModel, Standardizer, LogisticReport)> {
    config.validate()?;
    train.require_both_classes()?;
    let cols = train.cols;
    let standardizer = if config.standardize {
        Standardizer::fit(train.x, cols)
    } else {
        Standardizer::identity(cols)
    };
    let xs = standardizer.apply(train.x);
    let (model, report) = match config.solver {
        Solver::Newton => newton(&xs, cols, train.labels, config)?,
        Solver::Adam => adam(&xs, cols, train.labels, config)?,
    };
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Diverged {
            epoch: report.iterations,
            loss: report.objective,
        });
    }
    Ok((model, standardizer, report))
}

fn adam(x: &[f64], cols: usize, labels: &[bool], config: &LogisticConfig) -> Result<(LogisticModel, LogisticReport)> {
    let mut model = LogisticModel::zeros(cols);
    let mut theta = model.theta();
    let mut opt = OptimizerState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        cols + 1,
    );
    let mut report = LogisticReport {
        iterations: 0,
        objective: f64::NAN,
        gradient_norm: f64::INFINITY,
        converged: false,
    };
    for it in 1..=config.max_iters {
        let (obj, grad) = model.objective_and_gradient(x, labels, config.lambda)?;
        report.objective = obj;
        report.gradient_norm = norm(&grad);
        report.iterations = it;
        if !obj.is_finite() {
            return Err(Error::Diverged { epoch: it, loss: obj });
        }
        if report.gradient_norm < config.tolerance {
            report.converged = true;
            break;
        }
        opt.update(&mut theta, &grad);
        model = LogisticModel::from_theta(theta.clone());
    }
    Ok((model, report))
}

fn newton(x: &[f64], cols: usize, labels: &[bool], config: &LogisticConfig) -> Result<(LogisticModel, LogisticReport)> {
    let rows = labels.len();
    let d = cols + 1;
    // design matrix with an intercept column
    let mut xa = Vec::with_capacity(rows * d);
    for row in x.chunks_exact(cols) {
        xa.extend_from_slice(row);
        xa.push(1.0);
    }
    let mut model = LogisticModel::zeros(cols);
    let mut report = LogisticReport {
        iterations: 0,
        objective: f64::NAN,
        gradient_norm: f64::INFINITY,
        converged: false,
    };
    let mut scaled = vec![0.0; rows * d];
    let mut hessian = vec![0.0; d * d];
    for it in 1..=config.max_iters {
        let (obj, grad) = model.objective_and_gradient(x, labels, config.lambda)?;
        report.iterations = it;
        report.objective = obj;
        report.gradient_norm = norm(&grad);
        if !obj.is_finite() {
            return Err(Error::Diverged { epoch: it, loss: obj });
        }
        if report.gradient_norm < config.tolerance {
            report.converged = true;
            break;
        }
        let z = model.logits(x)?;
        for (r, &zr) in z.iter().enumerate() {
            let p = sigmoid(zr);
            let s = (p * (1.0 - p) / rows as f64).sqrt();
            for (o, v) in scaled[r * d..(r + 1) * d].iter_mut().zip(&xa[r * d..(r + 1) * d]) {
                *o = v * s;
            }
        }
        gemm(true, false, d, rows, d, 1.0, &scaled, &scaled, 0.0, &mut hessian);
        for j in 0..d {
            hessian[j * d + j] += if j < cols { 2.0 * config.lambda } else { 0.0 } + 1e-10;
        }
        let mut step = grad.clone();
        cholesky_solve(&mut hessian, d, &mut step)?;

        let theta = model.theta();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = LogisticModel::from_theta(theta.iter().zip(&step).map(|(p, s)| p - t * s).collect());
            let cand_obj = candidate.objective(x, labels, config.lambda)?;
            if cand_obj <= obj - 1e-4 * t * dot(&grad, &step) {
                model = candidate;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent possible at float precision: we are at the optimum
            report.converged = true;
            break;
        }
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_separable_line_splits_at_zero() {
        let x = [-1.0, 1.0, -1.0, 1.0];
        let y = [false, true, false, true];
        let ex = Examples::new(&x, 1, &y).unwrap();
        let cfg = LogisticConfig {
            lambda: 1e-4,
            standardize: false,
            ..LogisticConfig::default()
        };
        let (model, _, report) = train_logistic(&ex, &cfg).unwrap();
        assert!(report.converged);
        assert!(model.bias.abs() < 1e-9);
        assert!(model.weights[0] > 0.0);
        let p = model.predict_proba(&x).unwrap();
        assert!(p.iter().zip(&y).all(|(p, &y)| (*p > 0.5) == y));
    }

    #[test]
    fn both_solvers_reach_the_same_optimum() {
        let x: Vec<f64> = (0..60).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect();
        let y: Vec<bool> = (0..30).map(|i| (x[2 * i] + 0.5 * x[2 * i + 1] + ((i % 5) as f64 - 2.0) * 0.4) > 0.0).collect();
        let ex = Examples::new(&x, 2, &y).unwrap();
        let newton = LogisticConfig {
            lambda: 0.01,
            ..LogisticConfig::default()
        };
        let adam = LogisticConfig {
            solver: Solver::Adam,
            max_iters: 20_000,
            ..newton.clone()
        };
        let (a, _, _) = train_logistic(&ex, &newton).unwrap();
        let (b, _, rb) = train_logistic(&ex, &adam).unwrap();
        assert!(rb.converged, "{rb:?}");
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() < 1e-4);
        }
        assert!((a.bias - b.bias).abs() < 1e-4);
    }

    #[test]
    fn heavy_penalty_collapses_to_the_base_rate() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.77).sin()).collect();
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let ex = Examples::new(&x, 1, &y).unwrap();
        let cfg = LogisticConfig {
            lambda: 1e6,
            ..LogisticConfig::default()
        };
        let (model, st, _) = train_logistic(&ex, &cfg).unwrap();
        assert!(model.weights[0].abs() < 1e-6);
        let p = model.predict_proba(&st.apply(&x)).unwrap();
        assert!(p.iter().all(|p| (p - 0.25).abs() < 1e-5));
    }
}
