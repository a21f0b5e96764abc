//! Meal-demand forecasting for a refectory: encode a day's menu and
//! calendar context into normalized features, train a small MLP on past
//! service counts, and report forecast quality.
//!
//! The crate is organized as a pipeline:
//!
//! * [`dataio`] reads/writes the CSV schema, cleans defective rows and
//!   demand outliers, splits train/test, and can synthesize plausible data.
//! * [`encoding`] turns labels into ordinal codes and min-max normalizes
//!   everything into `[0, 1]`.
//! * [`network`] is the feed-forward MLP with seeded initialization and a
//!   bit-exact JSON model format.
//! * [`training`] fits a network by momentum gradient descent or
//!   Levenberg-Marquardt.
//! * [`metrics`] computes MAPE, MSE, and correlation measures and renders
//!   evaluation reports.
//! * [`search`] runs the topology/activation grid search.
//! * [`cli`] implements the `mealcast` command-line interface.
//!
//! Every random choice flows through a seeded generator, so identical
//! inputs and seeds reproduce results bit for bit.

pub mod cli;
pub mod dataio;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod network;
pub mod search;
pub mod training;

pub use error::{Error, Result};
