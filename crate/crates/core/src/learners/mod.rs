//! The three classifiers behind one train/predict interface: a feedforward
//! network, L2-penalized logistic regression, and a random control that only
//! knows the training class balance.

pub mod adam;
mod io;
pub mod logistic;
pub mod nn;
pub mod standardize;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, OptimizerState};
pub use io::{decode_model, encode_model, load_model, save_model};
pub use logistic::{train_logistic, LogisticConfig, LogisticModel, LogisticReport, Solver};
pub use nn::{train_network, Network, NetworkSpec, NnConfig, TrainReport, HIDDEN_SIZES};
pub use standardize::Standardizer;

use crate::dataset::{Direction, Hyperparams};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Row-major examples with one label per row.
#[derive(Debug, Clone, Copy)]
pub struct Examples<'a> {
    pub x: &'a [f64],
    pub cols: usize,
    pub labels: &'a [bool],
}

impl<'a> Examples<'a> {
    pub fn new(x: &'a [f64], cols: usize, labels: &'a [bool]) -> Result<Self> {
        if cols == 0 || x.len() != cols * labels.len() {
            return Err(Error::Shape {
                expected: cols,
                actual: if labels.is_empty() { x.len() } else { x.len() / labels.len() },
            });
        }
        Ok(Examples { x, cols, labels })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.rows() == 0 {
            return Err(Error::Empty("training set"));
        }
        let positive = self.positives();
        if positive == 0 || positive == self.rows() {
            return Err(Error::SingleClass {
                positive,
                total: self.rows(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Neural,
    Logistic,
    Random,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Neural, LearnerKind::Logistic, LearnerKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Neural => "neural",
            LearnerKind::Logistic => "logistic",
            LearnerKind::Random => "random",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        LearnerKind::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown learner {s:?}")))
    }
}

/// Constants for the gradient-trained learners.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub neural: NnConfig,
    pub logistic: LogisticConfig,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.neural.validate()?;
        self.logistic.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Neural { network: Network, standardizer: Standardizer },
    Logistic { model: LogisticModel, standardizer: Standardizer },
    Random { p: f64 },
    /// Stand-in when a learner could not be trained: predicts negative everywhere.
    NoTrade,
}

/// What training did, for logs and manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    /// Epochs for the network, solver iterations for the regression, 0 otherwise.
    pub epochs: u32,
    /// Best validation cross-entropy for the network, final objective for the
    /// regression, NaN otherwise.
    pub loss: f64,
    pub train_rows: u64,
    pub positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub kind: LearnerKind,
    pub direction: Direction,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub input_size: usize,
    pub meta: TrainingMeta,
    pub model: Model,
}

/// Positive-class probabilities and the resulting classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probability: Vec<f64>,
    pub classes: Vec<bool>,
}

const RANDOM_STREAM: u64 = 0x5241_4e44;

impl TrainedClassifier {
    pub fn is_fallback(&self) -> bool {
        matches!(self.model, Model::NoTrade)
    }

    /// Classifies `x` (row-major, `input_size` columns). `batch_key` only
    /// matters for the random control, whose draws are seeded by it so that
    /// repeated calls on the same batch agree.
    pub fn predict(&self, x: &[f64], batch_key: u64) -> Result<Prediction> {
        let cols = self.input_size;
        if cols == 0 || x.len() % cols != 0 {
            return Err(Error::Shape {
                expected: cols,
                actual: x.len(),
            });
        }
        let rows = x.len() / cols;
        Ok(match &self.model {
            Model::Neural { network, standardizer } => {
                let probs = network.forward(&standardizer.apply(x))?;
                let probability: Vec<f64> = probs.chunks_exact(2).map(|p| p[0]).collect();
                let classes = probs.chunks_exact(2).map(|p| p[0] > p[1]).collect();
                Prediction { probability, classes }
            }
            Model::Logistic { model, standardizer } => {
                let probability = model.predict_proba(&standardizer.apply(x))?;
                let classes = probability.iter().map(|&p| p > 0.5).collect();
                Prediction { probability, classes }
            }
            Model::Random { p } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[RANDOM_STREAM, batch_key]));
                Prediction {
                    probability: vec![*p; rows],
                    classes: (0..rows).map(|_| rng.random_bool(*p)).collect(),
                }
            }
            Model::NoTrade => Prediction {
                probability: vec![0.0; rows],
                classes: vec![false; rows],
            },
        })
    }
}

/// Trains one learner. `valid` drives early stopping for the network and is
/// ignored by the others.
pub fn train(
    kind: LearnerKind,
    direction: Direction,
    hyperparams: Hyperparams,
    train: &Examples,
    valid: &Examples,
    seed: u64,
    config: &LearnerConfig,
) -> Result<TrainedClassifier> {
    if train.rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    let positive_rate = train.positives() as f64 / train.rows() as f64;
    let (model, epochs, loss) = match kind {
        LearnerKind::Neural => {
            let (network, standardizer, report) = train_network(train, valid, seed, &config.neural)?;
            (
                Model::Neural { network, standardizer },
                report.epochs as u32,
                report.best_validation_loss,
            )
        }
        LearnerKind::Logistic => {
            let (model, standardizer, report) = train_logistic(train, &config.logistic)?;
            (
                Model::Logistic { model, standardizer },
                report.iterations as u32,
                report.objective,
            )
        }
        LearnerKind::Random => (Model::Random { p: positive_rate }, 0, f64::NAN),
    };
    Ok(TrainedClassifier {
        kind,
        direction,
        hyperparams,
        seed,
        input_size: train.cols,
        meta: TrainingMeta {
            epochs,
            loss,
            train_rows: train.rows() as u64,
            positive_rate,
        },
        model,
    })
}

/// The no-trade stand-in used when training fails on a degenerate set.
pub fn no_trade(
    kind: LearnerKind,
    direction: Direction,
    hyperparams: Hyperparams,
    train: &Examples,
    seed: u64,
) -> TrainedClassifier {
    TrainedClassifier {
        kind,
        direction,
        hyperparams,
        seed,
        input_size: train.cols,
        meta: TrainingMeta {
            epochs: 0,
            loss: f64::NAN,
            train_rows: train.rows() as u64,
            positive_rate: if train.rows() == 0 {
                0.0
            } else {
                train.positives() as f64 / train.rows() as f64
            },
        },
        model: Model::NoTrade,
    }
}
