use ndarray::{s, Array1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::BiLstmModel;
use super::network::{backward, forward, mse_gradient, mse_loss, predict, update_running_stats, Mode};
use super::optim::{adam_step, AdamConfig, AdamState, EarlyStopping, ReduceOnPlateau, StopDecision};
use crate::error::{Error, Result};
use crate::timeseries::{FeatureScaler, WindowedDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// With early stopping off the validation set may be empty and the
    /// final-epoch parameters are returned.
    pub early_stopping: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub lr_plateau_factor: f64,
    pub lr_plateau_patience: usize,
    pub lr_min: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 30,
            early_stop_patience: 5,
            early_stopping: true,
            batch_size: 32,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lr_plateau_factor: 0.5,
            lr_plateau_patience: 2,
            lr_min: 1e-6,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.early_stop_patience == 0 || self.lr_plateau_patience == 0 {
            return bad("patience values must be at least 1".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("lr_plateau_factor", self.lr_plateau_factor),
            ("lr_min", self.lr_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Learning rate in effect during each epoch.
    pub learning_rates: Vec<f64>,
    /// 1-based epoch whose parameters were returned; 0 when no epoch ran.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub final_learning_rate: f64,
}

/// Infer-mode MSE over a dataset, evaluated in chunks of `batch_size`.
pub fn evaluate_mse(model: &BiLstmModel, data: &WindowedDataset, batch_size: usize) -> Result<f64> {
    let preds = predict_scaled(model, data, batch_size)?;
    mse_loss(preds.as_slice().expect("contiguous"), data.targets.as_slice().expect("contiguous"))
}

/// Infer-mode predictions in scaled units.
pub fn predict_scaled(model: &BiLstmModel, data: &WindowedDataset, batch_size: usize) -> Result<Array1<f64>> {
    let n = data.len();
    let mut out = Array1::zeros(n);
    let step = batch_size.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + step).min(n);
        let p = predict(model, data.inputs.slice(s![start..end, .., ..]))?;
        out.slice_mut(s![start..end]).assign(&p);
        start = end;
    }
    Ok(out)
}

/// Predictions for every window, mapped back to raw target units.
pub fn predict_series(model: &BiLstmModel, dataset: &WindowedDataset, scaler: &FeatureScaler) -> Result<Vec<f64>> {
    let k = dataset.target_feature_index;
    Ok(predict_scaled(model, dataset, 256)?
        .iter()
        .map(|&v| scaler.inverse_transform(k, v))
        .collect())
}

/// Mini-batch training in chronological order with reduce-on-plateau and
/// early stopping on validation MSE. Returns the best-validation model.
pub fn train(
    model: &BiLstmModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(BiLstmModel, TrainReport)> {
    train_with_observer(model, train_set, val_set, config, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, report_so_far)` after each epoch.
pub fn train_with_observer(
    model: &BiLstmModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &TrainReport),
) -> Result<(BiLstmModel, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    let has_val = !val_set.is_empty();
    if config.early_stopping && !has_val {
        return Err(Error::Training(
            "validation set is empty but early stopping is enabled".into(),
        ));
    }
    let features = train_set.inputs.shape()[2];
    if features != model.input_dim() {
        return Err(Error::shape("feature axis", model.input_dim(), features));
    }
    if has_val && val_set.window() != train_set.window() {
        return Err(Error::shape("validation time axis", train_set.window(), val_set.window()));
    }

    let mut current = model.clone();
    let mut best = model.clone();
    let mut adam = AdamState::new(&current);
    let adam_cfg = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lr = config.learning_rate;
    let mut scheduler = ReduceOnPlateau::new(config.lr_plateau_factor, config.lr_plateau_patience, config.lr_min);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        learning_rates: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        final_learning_rate: lr,
    };

    let n = train_set.len();
    let targets = train_set.targets.as_slice().expect("contiguous");
    for epoch in 1..=config.max_epochs {
        report.learning_rates.push(lr);
        let mut weighted = 0.0;
        let mut start = 0;
        let mut batch_idx = 0;
        while start < n {
            let end = (start + config.batch_size).min(n);
            let inputs = train_set.inputs.slice(s![start..end, .., ..]);
            let (preds, cache) = forward(&current, inputs, Mode::Train(&mut rng))?;
            let preds = preds.as_slice().expect("contiguous");
            let y = &targets[start..end];
            let loss = mse_loss(preds, y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx,
                    loss,
                });
            }
            let grads = backward(&current, &cache, &mse_gradient(preds, y))?;
            adam_step(&mut current, &grads, &mut adam, lr, &adam_cfg)?;
            update_running_stats(&mut current, &cache);
            weighted += loss * (end - start) as f64;
            start = end;
            batch_idx += 1;
        }
        report.train_loss.push(weighted / n as f64);

        if has_val {
            let val = evaluate_mse(&current, val_set, config.batch_size)?;
            if !val.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx,
                    loss: val,
                });
            }
            report.val_loss.push(val);
            lr = scheduler.observe(val, lr);
            let decision = stopper.observe(epoch, val);
            if decision == StopDecision::Improved || !config.early_stopping {
                best.clone_from(&current);
                report.best_epoch = if config.early_stopping { stopper.best_epoch() } else { epoch };
            }
            on_epoch(epoch, &report);
            if config.early_stopping && decision == StopDecision::Stop {
                report.stopped_early = epoch < config.max_epochs;
                break;
            }
        } else {
            best.clone_from(&current);
            report.best_epoch = epoch;
            on_epoch(epoch, &report);
        }
    }
    report.final_learning_rate = lr;
    Ok((best, report))
}
