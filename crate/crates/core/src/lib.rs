//! Forecasting and bandwidth-provisioning engine: a from-scratch
//! bidirectional LSTM compared against two static baselines on
//! allocation-efficiency metrics.

pub mod allocation;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod neural;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
