use proptest::prelude::*;

use twinprov_core::allocation::{
    allocation_metrics, radar_normalize, step_metrics, AllocationPolicy, AllocationTrace, MetricsReport, RADAR_AXES,
};

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
}

/// Per-timestep definitions written out longhand.
fn brute_force(actual: &[f64], forecast: &[f64], allocated: &[f64]) -> MetricsReport {
    let n = actual.len();
    let mut abs_err = 0.0;
    let mut sq_err = 0.0;
    let mut eff = Vec::new();
    let mut waste = 0.0;
    let mut util_sum = 0.0;
    let mut util_n = 0;
    let mut over = 0.0;
    let mut under = 0;
    for t in 0..n {
        let (y, p, a) = (actual[t], forecast[t], allocated[t]);
        abs_err += (p - y).abs();
        sq_err += (p - y) * (p - y);
        if a == 0.0 {
            if y == 0.0 {
                eff.push(1.0);
                util_sum += 1.0;
                util_n += 1;
            } else {
                eff.push(0.0);
            }
        } else {
            eff.push(if y >= a { 1.0 } else { y / a });
            waste += if a > y { (a - y) / a } else { 0.0 };
            util_sum += y / a;
            util_n += 1;
        }
        if a > y {
            over += a - y;
        }
        if y > a {
            under += 1;
        }
    }
    let nf = n as f64;
    MetricsReport {
        samples: n,
        mae: abs_err / nf,
        rmse: (sq_err / nf).sqrt(),
        mean_efficiency: eff.iter().sum::<f64>() / nf,
        mean_wastage: waste / nf,
        mean_utilization: if util_n == 0 { 0.0 } else { util_sum / util_n as f64 },
        mean_over_provisioning: over / nf,
        efficiency_median: quantile(&eff, 50.0),
        efficiency_quartiles: (quantile(&eff, 25.0), quantile(&eff, 75.0)),
        efficiency_range: (quantile(&eff, 0.0), quantile(&eff, 100.0)),
        under_provision_count: under,
    }
}

fn assert_reports_match(got: &MetricsReport, want: &MetricsReport) -> Result<(), TestCaseError> {
    let pairs = [
        (got.mae, want.mae),
        (got.rmse, want.rmse),
        (got.mean_efficiency, want.mean_efficiency),
        (got.mean_wastage, want.mean_wastage),
        (got.mean_utilization, want.mean_utilization),
        (got.mean_over_provisioning, want.mean_over_provisioning),
        (got.efficiency_median, want.efficiency_median),
        (got.efficiency_quartiles.0, want.efficiency_quartiles.0),
        (got.efficiency_quartiles.1, want.efficiency_quartiles.1),
        (got.efficiency_range.0, want.efficiency_range.0),
        (got.efficiency_range.1, want.efficiency_range.1),
    ];
    for (i, (g, w)) in pairs.iter().enumerate() {
        prop_assert!(close(*g, *w), "field {i}: {g} vs {w}");
    }
    prop_assert_eq!(got.samples, want.samples);
    prop_assert_eq!(got.under_provision_count, want.under_provision_count);
    Ok(())
}

fn demand() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 9 => 0.0f64..1e3]
}

fn forecast() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 1 => -50.0f64..0.0, 8 => 0.0f64..1e3]
}

fn traces() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=20).prop_flat_map(|n| (prop::collection::vec(demand(), n), prop::collection::vec(forecast(), n)))
}

proptest! {
    #[test]
    fn aggregates_match_brute_force((actual, fc) in traces(), multiplier in 0.5f64..2.0, floor in 0.0f64..5.0) {
        let policy = AllocationPolicy { floor, multiplier };
        let trace = AllocationTrace::new("p", actual.clone(), fc.clone(), &policy).unwrap();
        let allocated: Vec<f64> = fc.iter().map(|f| (f * multiplier).max(floor)).collect();
        prop_assert_eq!(&trace.allocated, &allocated);
        let got = allocation_metrics(&trace).unwrap();
        assert_reports_match(&got, &brute_force(&actual, &fc, &allocated))?;
    }

    #[test]
    fn pointwise_identities((actual, fc) in traces()) {
        let trace = AllocationTrace::new("p", actual, fc, &AllocationPolicy::default()).unwrap();
        let m = allocation_metrics(&trace).unwrap();
        prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
        prop_assert!((0.0..=1.0).contains(&m.mean_efficiency));
        prop_assert!((0.0..=1.0).contains(&m.mean_wastage));
        prop_assert!(m.mean_over_provisioning >= 0.0);
        for (&y, &a) in trace.actual.iter().zip(&trace.allocated) {
            let s = step_metrics(y, a);
            prop_assert!((0.0..=1.0).contains(&s.efficiency) && (0.0..=1.0).contains(&s.wastage));
            if a > 0.0 {
                prop_assert!(close(s.wastage, 1.0 - s.utilization.min(1.0)));
            }
            if a >= y {
                prop_assert_eq!(s.over_provisioning, a - y);
            } else {
                prop_assert_eq!(s.over_provisioning, 0.0);
            }
        }
    }

    #[test]
    fn radar_best_raw_value_scores_highest(
        (actual, fcs) in (1usize..=20).prop_flat_map(|n| (
            prop::collection::vec(demand(), n),
            prop::collection::vec(prop::collection::vec(forecast(), n), 2..5),
        ))
    ) {
        let reports: Vec<(String, MetricsReport)> = fcs
            .into_iter()
            .enumerate()
            .map(|(i, fc)| {
                let t = AllocationTrace::new(format!("p{i}"), actual.clone(), fc, &AllocationPolicy::default()).unwrap();
                (t.policy_name.clone(), allocation_metrics(&t).unwrap())
            })
            .collect();
        let radar = radar_normalize(&reports).unwrap();
        for (axis, (name, lower_better)) in RADAR_AXES.iter().enumerate() {
            let raw = |r: &MetricsReport| match *name {
                "mae" => r.mae,
                "rmse" => r.rmse,
                "efficiency" => r.mean_efficiency,
                "wastage" => r.mean_wastage,
                "utilization" => r.mean_utilization,
                _ => r.mean_over_provisioning,
            };
            let best = (0..reports.len())
                .min_by(|&a, &b| {
                    let (x, y) = (raw(&reports[a].1), raw(&reports[b].1));
                    if *lower_better { x.total_cmp(&y) } else { y.total_cmp(&x) }
                })
                .unwrap();
            let top = radar.iter().map(|r| r.scores[axis].1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(radar[best].scores[axis].1, top);
            prop_assert_eq!(top, 1.0);
        }
    }
}
