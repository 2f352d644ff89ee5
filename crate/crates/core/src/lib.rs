//! Walk-forward intraday backtesting engine that gauges relative weak-form
//! market efficiency by how profitably simple reference classifiers trade
//! one-minute bar data.

pub mod analytics;
pub mod bars;
pub mod calendar;
pub mod dataset;
pub mod error;
pub mod learners;
mod linalg;
pub mod price;
pub mod seed;
pub mod selfcheck;
pub mod strategy;
pub mod synth;
pub mod universe;
pub mod walkforward;

pub use error::{Error, Result};
pub use price::Price;
