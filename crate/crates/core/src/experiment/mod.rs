//! End-to-end experiment: data preparation, training, comparison of the
//! forecaster against the static baselines, and report emission.

pub mod charts;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::allocation::{allocation_metrics, radar_normalize, AllocationTrace, MetricsReport, RadarScores};
use crate::baselines::{baseline_mean2sigma, baseline_p95};
use crate::error::{Error, Result};
use crate::neural::{init_model, model_size_report, predict_series, Architecture, Checkpoint, ModelSize, TrainReport};
use crate::neural::train::train_with_observer;
use crate::timeseries::{chrono_split, fit_scaler, make_windows, FeatureScaler, KpiSeries, Splits, WindowedDataset};

pub use config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const AI_DT: &str = "ai_dt";
pub const BASELINE_MEAN2SIGMA: &str = "baseline1_mean2sigma";
pub const BASELINE_P95: &str = "baseline2_p95";

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const REPORT_FILE: &str = "report.json";

/// Everything derived from the input before any model is involved.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub series: KpiSeries,
    pub splits: Splits,
    /// Fit on the training split only.
    pub scaler: FeatureScaler,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    config.validate()?;
    let series = config.load_series()?;
    let splits = chrono_split(&series, &config.split, config.window)?;
    let scaler = fit_scaler(&splits.train)?;
    let target = config.target_feature.index();
    let windows = |s: &KpiSeries| make_windows(s, &scaler, config.window, target);
    Ok(PreparedData {
        train: windows(&splits.train)?,
        val: windows(&splits.val)?,
        test: windows(&splits.test)?,
        series,
        splits,
        scaler,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainTimings {
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub config: RunConfig,
    pub seed: u64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub train_report: TrainReport,
    pub model_size: ModelSize,
    pub timings: TrainTimings,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub summary: TrainSummary,
}

pub fn run_train(config: &RunConfig) -> Result<TrainOutcome> {
    run_train_with_observer(config, |_, _| {})
}

/// Trains the reference architecture. The returned model is already
/// rounded to single precision, so it equals what a checkpoint reload gives.
pub fn run_train_with_observer(
    config: &RunConfig,
    on_epoch: impl FnMut(usize, &TrainReport),
) -> Result<TrainOutcome> {
    let data = prepare(config)?;
    let started = Instant::now();
    let initial = init_model(&Architecture::reference(crate::timeseries::NUM_FEATURES), config.seed)?;
    let (mut model, report) = train_with_observer(&initial, &data.train, &data.val, &config.train, on_epoch)?;
    model.round_to_f32();
    let train_seconds = started.elapsed().as_secs_f64();

    let summary = TrainSummary {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        seed: config.seed,
        train_windows: data.train.len(),
        val_windows: data.val.len(),
        train_report: report.clone(),
        model_size: model_size_report(&model),
        timings: TrainTimings { train_seconds },
    };
    let checkpoint = Checkpoint {
        model,
        scaler: data.scaler,
        window: config.window,
        target_feature_index: config.target_feature.index(),
        train_seed: config.seed,
        train_report: report,
        run_config: serde_json::to_value(config)?,
    };
    Ok(TrainOutcome { checkpoint, summary })
}

/// Writes the checkpoint and the training summary into `dir`.
pub fn write_train_outputs(outcome: &TrainOutcome, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    outcome.checkpoint.save(&ckpt)?;
    let summary = dir.join(TRAIN_REPORT_FILE);
    write_json(&summary, &outcome.summary)?;
    Ok((ckpt, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub name: String,
    /// The static forecast value; absent for the learned forecaster.
    pub constant: Option<f64>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub rows: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    /// Length of the target vector every policy is scored on.
    pub test_targets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareTimings {
    pub inference_seconds: f64,
    pub compare_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub seed: u64,
    pub data: DataSummary,
    pub policies: Vec<PolicyResult>,
    pub train_report: TrainReport,
    pub model_size: ModelSize,
    pub radar: Vec<RadarScores>,
    /// Wall-clock noise; not covered by reproducibility guarantees.
    pub timings: CompareTimings,
}

impl ComparisonReport {
    pub fn policy(&self, name: &str) -> Option<&PolicyResult> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// The report as JSON with the timing block removed.
    pub fn reproducible_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timings");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::Compatibility(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

pub fn check_compatibility(config: &RunConfig, checkpoint: &Checkpoint) -> Result<()> {
    if checkpoint.window != config.window {
        return Err(Error::Compatibility(format!(
            "checkpoint was trained with window {} but the config asks for {}",
            checkpoint.window, config.window
        )));
    }
    let target = config.target_feature.index();
    if checkpoint.target_feature_index != target {
        return Err(Error::Compatibility(format!(
            "checkpoint predicts feature index {} but the config targets `{}` (index {target})",
            checkpoint.target_feature_index, config.target_feature
        )));
    }
    let dim = checkpoint.model.input_dim();
    if dim != crate::timeseries::NUM_FEATURES {
        return Err(Error::Compatibility(format!(
            "checkpoint expects {dim} input features, data has {}",
            crate::timeseries::NUM_FEATURES
        )));
    }
    Ok(())
}

/// Scores the checkpointed forecaster and both static baselines on the
/// test split. Every policy sees the same raw target vector: the test
/// split's target column from position `window` onward.
pub fn run_compare(config: &RunConfig, checkpoint: &Checkpoint) -> Result<ComparisonReport> {
    let started = Instant::now();
    check_compatibility(config, checkpoint)?;
    config.validate()?;
    let series = config.load_series()?;
    let splits = chrono_split(&series, &config.split, config.window)?;
    if splits.test.is_empty() {
        return Err(Error::Size("test split is empty; nothing to compare".into()));
    }
    let target = config.target_feature;
    let test = make_windows(&splits.test, &checkpoint.scaler, config.window, target.index())?;
    let actual: Vec<f64> = splits.test.feature_values(target)[config.window..].to_vec();
    debug_assert_eq!(actual.len(), test.len());

    let inference = Instant::now();
    let ai_forecast = predict_series(&checkpoint.model, &test, &checkpoint.scaler)?;
    let inference_seconds = inference.elapsed().as_secs_f64();

    let train_targets = splits.train.feature_values(target);
    let b1 = baseline_mean2sigma(&train_targets, actual.len())?;
    let b2 = baseline_p95(&train_targets, actual.len())?;

    let mut policies = Vec::with_capacity(3);
    for (name, constant, forecast) in [
        (AI_DT, None, ai_forecast),
        (BASELINE_MEAN2SIGMA, Some(b1.constant), b1.values()),
        (BASELINE_P95, Some(b2.constant), b2.values()),
    ] {
        let trace = AllocationTrace::new(name, actual.clone(), forecast, &config.allocation)?;
        policies.push(PolicyResult {
            name: name.to_string(),
            constant,
            metrics: allocation_metrics(&trace)?,
        });
    }
    let named: Vec<(String, MetricsReport)> = policies.iter().map(|p| (p.name.clone(), p.metrics.clone())).collect();
    let radar = radar_normalize(&named)?;

    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        seed: config.seed,
        data: DataSummary {
            rows: series.len(),
            train_rows: splits.train.len(),
            val_rows: splits.val.len(),
            test_rows: splits.test.len(),
            test_targets: actual.len(),
        },
        policies,
        train_report: checkpoint.train_report.clone(),
        model_size: model_size_report(&checkpoint.model),
        radar,
        timings: CompareTimings {
            inference_seconds,
            compare_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

/// Writes `report.json` and the four charts into `dir`, returning every
/// path written.
pub fn write_compare_outputs(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(REPORT_FILE);
    write_json(&path, report)?;
    written.push(path);
    for (name, svg) in charts::render_all(report) {
        let path = dir.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the run configuration embedded in a checkpoint, if any.
pub fn embedded_config(checkpoint: &Checkpoint) -> Result<Option<RunConfig>> {
    if checkpoint.run_config.is_null() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_value(checkpoint.run_config.clone())?))
}
