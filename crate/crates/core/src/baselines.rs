//! Static provisioning forecasters fit once on the training targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticMethod {
    Mean2Sigma,
    P95,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticForecast {
    pub constant: f64,
    pub horizon: usize,
    pub method: StaticMethod,
}

impl StaticForecast {
    pub fn values(&self) -> Vec<f64> {
        vec![self.constant; self.horizon]
    }
}

fn check_input(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Estimation("no training values".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Estimation(format!("non-finite training value {bad}")));
    }
    Ok(())
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Domain("forecast horizon must be positive".into()));
    }
    Ok(())
}

/// Linear-interpolation percentile on an already sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Linear-interpolation percentile (zero-based rank `q/100 * (n - 1)`).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    check_input(values)?;
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Domain(format!("percentile {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

/// Mean plus twice the population (1/T) standard deviation.
pub fn baseline_mean2sigma(train_targets: &[f64], horizon: usize) -> Result<StaticForecast> {
    check_input(train_targets)?;
    check_horizon(horizon)?;
    let n = train_targets.len() as f64;
    let mean = train_targets.iter().sum::<f64>() / n;
    let var = train_targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    Ok(StaticForecast {
        constant: mean + 2.0 * var.sqrt(),
        horizon,
        method: StaticMethod::Mean2Sigma,
    })
}

pub fn baseline_p95(train_targets: &[f64], horizon: usize) -> Result<StaticForecast> {
    check_horizon(horizon)?;
    Ok(StaticForecast {
        constant: percentile(train_targets, 95.0)?,
        horizon,
        method: StaticMethod::P95,
    })
}
