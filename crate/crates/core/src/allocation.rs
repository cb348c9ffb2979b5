//! Forecast-to-allocation mapping and the allocation scorecard: forecast
//! error (MAE/RMSE), efficiency, wastage, utilization and over-provisioning.

use serde::{Deserialize, Serialize};

use crate::baselines::quantile_sorted;
use crate::error::{Error, Result};

/// Turns a forecast into an allocation: `max(multiplier * forecast, floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationPolicy {
    pub floor: f64,
    pub multiplier: f64,
}

impl Default for AllocationPolicy {
    fn default() -> Self {
        Self {
            floor: 0.0,
            multiplier: 1.0,
        }
    }
}

impl AllocationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::Domain(format!("allocation floor {} must be >= 0", self.floor)));
        }
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(Error::Domain(format!(
                "allocation multiplier {} must be > 0",
                self.multiplier
            )));
        }
        Ok(())
    }

    pub fn allocate(&self, forecast: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        forecast
            .iter()
            .map(|&f| {
                if f.is_finite() {
                    Ok((self.multiplier * f).max(self.floor))
                } else {
                    Err(Error::Domain(format!("non-finite forecast value {f}")))
                }
            })
            .collect()
    }
}

/// Pass-through allocation clipped at `floor`.
pub fn allocate_from_forecast(forecast: &[f64], floor: f64) -> Result<Vec<f64>> {
    AllocationPolicy {
        floor,
        multiplier: 1.0,
    }
    .allocate(forecast)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationTrace {
    pub policy_name: String,
    pub actual: Vec<f64>,
    pub forecast: Vec<f64>,
    pub allocated: Vec<f64>,
}

impl AllocationTrace {
    pub fn new(
        policy_name: impl Into<String>,
        actual: Vec<f64>,
        forecast: Vec<f64>,
        policy: &AllocationPolicy,
    ) -> Result<Self> {
        let allocated = policy.allocate(&forecast)?;
        let trace = Self {
            policy_name: policy_name.into(),
            actual,
            forecast,
            allocated,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// A trace whose forecast is the allocation itself.
    pub fn from_allocated(
        policy_name: impl Into<String>,
        actual: Vec<f64>,
        allocated: Vec<f64>,
    ) -> Result<Self> {
        let trace = Self {
            policy_name: policy_name.into(),
            forecast: allocated.clone(),
            actual,
            allocated,
        };
        trace.validate()?;
        Ok(trace)
    }

    fn validate(&self) -> Result<()> {
        if self.actual.is_empty() {
            return Err(Error::Domain("allocation trace is empty".into()));
        }
        for (axis, len) in [("allocated", self.allocated.len()), ("forecast", self.forecast.len())] {
            if len != self.actual.len() {
                return Err(Error::shape(axis, self.actual.len(), len));
            }
        }
        let bad = |v: &f64| !v.is_finite() || *v < 0.0;
        if let Some(v) = self.actual.iter().find(|v| bad(v)) {
            return Err(Error::Domain(format!("actual demand {v} must be finite and >= 0")));
        }
        if let Some(v) = self.allocated.iter().find(|v| bad(v)) {
            return Err(Error::Domain(format!("allocation {v} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Per-timestep allocation metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub efficiency: f64,
    pub wastage: f64,
    /// `+inf` when nothing was allocated against positive demand.
    pub utilization: f64,
    pub over_provisioning: f64,
}

pub fn step_metrics(actual: f64, allocated: f64) -> StepMetrics {
    let over_provisioning = (allocated - actual).max(0.0);
    if allocated > 0.0 {
        let ratio = actual / allocated;
        StepMetrics {
            efficiency: ratio.min(1.0),
            wastage: ((allocated - actual) / allocated).max(0.0),
            utilization: ratio,
            over_provisioning,
        }
    } else if actual > 0.0 {
        StepMetrics {
            efficiency: 0.0,
            wastage: 0.0,
            utilization: f64::INFINITY,
            over_provisioning,
        }
    } else {
        StepMetrics {
            efficiency: 1.0,
            wastage: 0.0,
            utilization: 1.0,
            over_provisioning,
        }
    }
}

pub fn forecast_errors(predicted: &[f64], actual: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != actual.len() {
        return Err(Error::shape("predicted", actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::Domain("cannot score an empty forecast".into()));
    }
    let n = actual.len() as f64;
    let (abs, sq) = predicted
        .iter()
        .zip(actual)
        .fold((0.0, 0.0), |(a, s), (p, y)| {
            let e = p - y;
            (a + e.abs(), s + e * e)
        });
    Ok((abs / n, (sq / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mean_efficiency: f64,
    pub mean_wastage: f64,
    /// Mean over timesteps with a finite utilization.
    pub mean_utilization: f64,
    pub mean_over_provisioning: f64,
    pub efficiency_median: f64,
    pub efficiency_quartiles: (f64, f64),
    pub efficiency_range: (f64, f64),
    pub under_provision_count: usize,
}

pub fn allocation_metrics(trace: &AllocationTrace) -> Result<MetricsReport> {
    trace.validate()?;
    let (mae, rmse) = forecast_errors(&trace.forecast, &trace.actual)?;
    let steps: Vec<StepMetrics> = trace
        .actual
        .iter()
        .zip(&trace.allocated)
        .map(|(&a, &b)| step_metrics(a, b))
        .collect();
    let n = steps.len() as f64;
    let mean = |f: fn(&StepMetrics) -> f64| steps.iter().map(f).sum::<f64>() / n;

    let finite_util: Vec<f64> = steps
        .iter()
        .map(|s| s.utilization)
        .filter(|u| u.is_finite())
        .collect();
    let mean_utilization = if finite_util.is_empty() {
        0.0
    } else {
        finite_util.iter().sum::<f64>() / finite_util.len() as f64
    };

    let mut eff: Vec<f64> = steps.iter().map(|s| s.efficiency).collect();
    eff.sort_by(f64::total_cmp);

    Ok(MetricsReport {
        samples: steps.len(),
        mae,
        rmse,
        mean_efficiency: mean(|s| s.efficiency),
        mean_wastage: mean(|s| s.wastage),
        mean_utilization,
        mean_over_provisioning: mean(|s| s.over_provisioning),
        efficiency_median: quantile_sorted(&eff, 50.0),
        efficiency_quartiles: (quantile_sorted(&eff, 25.0), quantile_sorted(&eff, 75.0)),
        efficiency_range: (eff[0], eff[eff.len() - 1]),
        under_provision_count: trace
            .actual
            .iter()
            .zip(&trace.allocated)
            .filter(|(a, b)| a > b)
            .count(),
    })
}

/// Radar axes in display order, with whether a lower raw value is better.
pub const RADAR_AXES: [(&str, bool); 6] = [
    ("mae", true),
    ("rmse", true),
    ("efficiency", false),
    ("wastage", true),
    ("utilization", false),
    ("over_provisioning", true),
];

fn radar_value(report: &MetricsReport, axis: &str) -> f64 {
    match axis {
        "mae" => report.mae,
        "rmse" => report.rmse,
        "efficiency" => report.mean_efficiency,
        "wastage" => report.mean_wastage,
        "utilization" => report.mean_utilization,
        "over_provisioning" => report.mean_over_provisioning,
        _ => unreachable!("unknown radar axis {axis}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarScores {
    pub policy: String,
    /// `(axis, score)` in [`RADAR_AXES`] order; higher is better.
    pub scores: Vec<(String, f64)>,
}

/// Min-max normalizes each axis across policies onto [0, 1], flipping
/// lower-is-better axes. An axis where every policy ties scores 1.0.
pub fn radar_normalize(reports: &[(String, MetricsReport)]) -> Result<Vec<RadarScores>> {
    if reports.len() < 2 {
        return Err(Error::Domain(format!(
            "radar normalization needs at least 2 policies, got {}",
            reports.len()
        )));
    }
    let mut out: Vec<RadarScores> = reports
        .iter()
        .map(|(name, _)| RadarScores {
            policy: name.clone(),
            scores: Vec::with_capacity(RADAR_AXES.len()),
        })
        .collect();
    for (axis, lower_better) in RADAR_AXES {
        let values: Vec<f64> = reports.iter().map(|(_, r)| radar_value(r, axis)).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (slot, v) in out.iter_mut().zip(&values) {
            let score = if hi > lo {
                let t = (v - lo) / (hi - lo);
                if lower_better {
                    1.0 - t
                } else {
                    t
                }
            } else {
                1.0
            };
            slot.scores.push((axis.to_string(), score));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn report_with(mae: f64, eff: f64) -> MetricsReport {
        MetricsReport {
            samples: 1,
            mae,
            rmse: mae,
            mean_efficiency: eff,
            mean_wastage: 1.0 - eff,
            mean_utilization: eff,
            mean_over_provisioning: mae,
            efficiency_median: eff,
            efficiency_quartiles: (eff, eff),
            efficiency_range: (eff, eff),
            under_provision_count: 0,
        }
    }

    #[test]
    fn allocate_examples() {
        assert_eq!(allocate_from_forecast(&[10.0, 20.0], 0.0).unwrap(), vec![10.0, 20.0]);
        assert_eq!(allocate_from_forecast(&[-5.0], 0.0).unwrap(), vec![0.0]);
        assert_eq!(allocate_from_forecast(&[3.0, 9.0], 4.0).unwrap(), vec![4.0, 9.0]);
        assert!(matches!(allocate_from_forecast(&[f64::NAN], 0.0), Err(Error::Domain(_))));
        let policy = AllocationPolicy {
            floor: 0.0,
            multiplier: 1.5,
        };
        assert_eq!(policy.allocate(&[2.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn step_metric_cases() {
        let s = step_metrics(80.0, 100.0);
        assert_eq!((s.efficiency, s.wastage, s.utilization, s.over_provisioning), (0.8, 0.2, 0.8, 20.0));
        let s = step_metrics(120.0, 100.0);
        assert_eq!((s.efficiency, s.wastage, s.utilization, s.over_provisioning), (1.0, 0.0, 1.2, 0.0));
        let s = step_metrics(0.0, 0.0);
        assert_eq!((s.efficiency, s.wastage, s.utilization), (1.0, 0.0, 1.0));
        let s = step_metrics(5.0, 0.0);
        assert_eq!(s.efficiency, 0.0);
        assert!(s.utilization.is_infinite());
    }

    #[test]
    fn zero_allocation_excluded_from_utilization_mean() {
        let t = AllocationTrace::from_allocated("p", vec![5.0, 50.0], vec![0.0, 100.0]).unwrap();
        let r = allocation_metrics(&t).unwrap();
        assert_eq!(r.mean_utilization, 0.5);
        assert_eq!(r.under_provision_count, 1);
        assert_eq!(r.mean_efficiency, 0.25);
    }

    #[test]
    fn identity_allocation() {
        let v = vec![3.0, 7.0, 1.0];
        let r = allocation_metrics(&AllocationTrace::from_allocated("id", v.clone(), v).unwrap()).unwrap();
        assert_eq!((r.mae, r.rmse), (0.0, 0.0));
        assert_eq!((r.mean_efficiency, r.mean_wastage, r.mean_utilization), (1.0, 0.0, 1.0));
        assert_eq!(r.mean_over_provisioning, 0.0);
    }

    #[test]
    fn forecast_error_examples() {
        assert_eq!(forecast_errors(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (mae, rmse) = forecast_errors(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(mae, 1.5);
        assert_relative_eq!(rmse, 2.5f64.sqrt(), max_relative = 1e-15);
        let (mae, rmse) = forecast_errors(&[4.0, 0.0, 7.5], &[1.5, -2.5, 5.0]).unwrap();
        assert_relative_eq!(mae, 2.5);
        assert_relative_eq!(rmse, 2.5);
        assert!(matches!(forecast_errors(&[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn trace_validation() {
        assert!(AllocationTrace::from_allocated("e", vec![], vec![]).is_err());
        assert!(AllocationTrace::from_allocated("m", vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(AllocationTrace::from_allocated("n", vec![-1.0], vec![1.0]).is_err());
    }

    #[test]
    fn quartiles_use_linear_interpolation() {
        // efficiencies 0.2, 0.4, 0.6, 0.8, 1.0
        let actual = vec![20.0, 40.0, 60.0, 80.0, 100.0];
        let t = AllocationTrace::from_allocated("q", actual, vec![100.0; 5]).unwrap();
        let r = allocation_metrics(&t).unwrap();
        assert_relative_eq!(r.efficiency_median, 0.6);
        assert_relative_eq!(r.efficiency_quartiles.0, 0.4);
        assert_relative_eq!(r.efficiency_quartiles.1, 0.8);
        assert_eq!(r.efficiency_range, (0.2, 1.0));
    }

    #[test]
    fn radar_examples() {
        let two = vec![
            ("good".to_string(), report_with(1.0, 0.9)),
            ("bad".to_string(), report_with(9.0, 0.3)),
        ];
        let s = radar_normalize(&two).unwrap();
        assert!(s[0].scores.iter().all(|(_, v)| *v == 1.0));
        assert!(s[1].scores.iter().all(|(_, v)| *v == 0.0));

        let same = vec![
            ("a".to_string(), report_with(2.0, 0.5)),
            ("b".to_string(), report_with(2.0, 0.5)),
        ];
        for r in radar_normalize(&same).unwrap() {
            assert!(r.scores.iter().all(|(_, v)| *v == 1.0));
        }

        let three = vec![
            ("a".to_string(), report_with(25.0, 0.5)),
            ("b".to_string(), report_with(300.0, 0.5)),
            ("c".to_string(), report_with(500.0, 0.5)),
        ];
        let s = radar_normalize(&three).unwrap();
        // (500 - 300) / (500 - 25) = 0.42105...
        assert_eq!(s[0].scores[0], ("mae".to_string(), 1.0));
        assert_relative_eq!(s[1].scores[0].1, 200.0 / 475.0, max_relative = 1e-15);
        assert_relative_eq!(s[1].scores[0].1, 0.421, epsilon = 1e-3);
        assert_eq!(s[2].scores[0].1, 0.0);

        assert!(radar_normalize(&three[..1]).is_err());
    }
}
