//! Imbalanced time-series classification toolkit: temporal neural networks
//! trained with an adaptive, per-minibatch misclassification cost, alongside
//! resampling baselines and a cross-validated evaluation harness.

pub mod app;
pub mod cost;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod par;
pub mod resample;
pub mod rng;

pub use error::{Error, Result};
