use ndarray::Array1;
use proptest::prelude::*;

use twinprov_core::neural::train::predict_series;
use twinprov_core::neural::{Architecture, BiLstmModel};
use twinprov_core::synth::{generate_traffic, SynthConfig};
use twinprov_core::timeseries::{
    chrono_split, fit_scaler, make_windows, read_csv, write_csv, Feature, KpiRecord, KpiSeries, SplitSpec,
    NUM_FEATURES,
};

fn series_from(values: &[[f64; 4]]) -> KpiSeries {
    let records = values
        .iter()
        .enumerate()
        .map(|(i, v)| KpiRecord {
            timestamp: 300 * i as u64,
            internet: v[0],
            downstream: v[1],
            sessions: v[2],
            vpn: v[3],
        })
        .collect();
    KpiSeries::new(records, 300).unwrap()
}

fn rows() -> impl Strategy<Value = Vec<[f64; 4]>> {
    prop::collection::vec(prop::array::uniform4(0.0f64..1e9), 3..60)
}

proptest! {
    #[test]
    fn windows_unscale_to_series_values(values in rows(), window in 1usize..6, target in 0usize..4) {
        prop_assume!(values.len() > window);
        let series = series_from(&values);
        let scaler = fit_scaler(&series).unwrap();
        let data = make_windows(&series, &scaler, window, target).unwrap();
        prop_assert_eq!(data.len(), values.len() - window);
        for i in 0..data.len() {
            for j in 0..window {
                for (k, &raw) in values[i + j].iter().enumerate() {
                    let back = scaler.inverse_transform(k, data.inputs[[i, j, k]]);
                    prop_assert!((back - raw).abs() <= 1e-12 * raw.abs().max(1.0), "{back} vs {raw}");
                }
            }
            let raw = values[i + window][target];
            let back = scaler.inverse_transform(target, data.targets[i]);
            prop_assert!((back - raw).abs() <= 1e-12 * raw.abs().max(1.0));
        }
    }

    #[test]
    fn split_partitions_in_order(len in 40usize..400, window in 1usize..8) {
        let values: Vec<[f64; 4]> = (0..len).map(|i| [i as f64; 4]).collect();
        let series = series_from(&values);
        let spec = SplitSpec::default();
        if let Ok(splits) = chrono_split(&series, &spec, window) {
            let joined: Vec<f64> = [&splits.train, &splits.val, &splits.test]
                .iter()
                .flat_map(|s| s.feature_values(Feature::Internet))
                .collect();
            prop_assert_eq!(joined, (0..len).map(|i| i as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn csv_roundtrip_is_lossless(values in rows()) {
        let series = series_from(&values);
        let mut buf = Vec::new();
        write_csv(&series, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, series);
    }
}

/// A network with no recurrent layers whose output row selects the target
/// feature at the last step, so its forecast is "the previous value".
fn echo_model(target: usize) -> BiLstmModel {
    let arch = Architecture {
        input_dim: NUM_FEATURES,
        hidden_sizes: vec![],
        dense_hidden: None,
        batch_norm: false,
        dropout: 0.0,
    };
    let mut model = BiLstmModel::zeros(&arch).unwrap();
    model.dense_out.weights[[0, target]] = 1.0;
    model
}

#[test]
fn echo_forecast_returns_previous_raw_value() {
    let cfg = SynthConfig {
        length: 300,
        ..SynthConfig::default_5g()
    };
    let series = generate_traffic(&cfg).unwrap();
    let scaler = fit_scaler(&series).unwrap();
    for feature in [Feature::Internet, Feature::Vpn] {
        let k = feature.index();
        let data = make_windows(&series, &scaler, 10, k).unwrap();
        let forecast = predict_series(&echo_model(k), &data, &scaler).unwrap();
        let raw = series.feature_values(feature);
        for (i, f) in forecast.iter().enumerate() {
            let expect = raw[i + 9];
            assert!((f - expect).abs() <= 1e-6 * expect.abs(), "{f} vs {expect}");
        }
    }
}

#[test]
fn synthetic_mean_tracks_base_level() {
    let week = 7 * 24 * 12;
    for seed in 0..10 {
        let cfg = SynthConfig {
            seed,
            length: week,
            burst_rate: 0.0,
            ..SynthConfig::default_5g()
        };
        assert!(cfg.diurnal_amplitude <= 0.5 * cfg.base_level);
        assert!(cfg.weekly_amplitude <= 0.5 * cfg.base_level);
        let values = generate_traffic(&cfg).unwrap().feature_values(Feature::Internet);
        let mean = Array1::from(values).mean().unwrap();
        let rel = (mean - cfg.base_level).abs() / cfg.base_level;
        assert!(rel < 0.05, "seed {seed}: mean {mean} off by {rel}");
    }
}

#[test]
fn synthetic_csv_is_byte_identical_across_runs() {
    let render = || {
        let mut buf = Vec::new();
        write_csv(&generate_traffic(&SynthConfig::default_5g()).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    assert_eq!(read_csv(a.as_slice()).unwrap().len(), 2000);
}
