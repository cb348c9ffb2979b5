//! Analytic-vs-numeric gradient comparison on tiny seeded networks.

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{init_model, Architecture, BiLstmModel};
use super::network::{backward_with_fault, forward, mse_gradient, mse_loss, GradientFault, Mode};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Shape of the networks exercised by [`grad_check`]. Dropout is forced
/// off so the loss is a deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckShape {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub dense_hidden: Option<usize>,
    pub batch_norm: bool,
    pub window: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradCheckShape {
    fn default() -> Self {
        Self {
            input_dim: 4,
            hidden_sizes: vec![3, 4, 2],
            dense_hidden: Some(3),
            batch_norm: true,
            window: 5,
            batch: 3,
            seed: 2024,
        }
    }
}

impl GradCheckShape {
    fn validate(&self) -> Result<()> {
        if self.hidden_sizes.iter().any(|h| *h > 4) || self.dense_hidden.is_some_and(|d| d > 4) {
            return Err(Error::Config("gradient check needs hidden sizes <= 4".into()));
        }
        if !(1..=6).contains(&self.window) || !(1..=3).contains(&self.batch) {
            return Err(Error::Config("gradient check needs window <= 6 and batch <= 3".into()));
        }
        Ok(())
    }

    fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim,
            hidden_sizes: self.hidden_sizes.clone(),
            dense_hidden: self.dense_hidden,
            batch_norm: self.batch_norm,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub parameters: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub tolerance: f64,
    pub epsilon: f64,
    /// Worst case over all trials, one entry per parameter block.
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }
}

/// `|a - n| / max(1, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0)
}

fn train_loss(model: &BiLstmModel, inputs: &Array3<f64>, targets: &Array1<f64>) -> f64 {
    // dropout is off, so the generator is never consulted
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (p, _) = forward(model, inputs.view(), Mode::Train(&mut rng)).expect("shapes fixed by construction");
    mse_loss(p.as_slice().unwrap(), targets.as_slice().unwrap()).expect("equal lengths")
}

/// Builds one seeded instance: initialized weights with every trainable
/// value jittered (so biases and batch-norm affine terms are non-trivial),
/// random inputs and targets.
pub fn random_instance(shape: &GradCheckShape, seed: u64) -> Result<(BiLstmModel, Array3<f64>, Array1<f64>)> {
    let mut model = init_model(&shape.architecture(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for block in model.trainable_blocks_mut() {
        for v in block.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let inputs = Array3::from_shape_simple_fn((shape.batch, shape.window, shape.input_dim), || {
        rng.random_range(-1.0..1.0)
    });
    let targets = Array1::from_shape_simple_fn(shape.batch, || rng.random_range(-1.0..1.0));
    Ok((model, inputs, targets))
}

pub fn grad_check(shape: &GradCheckShape, trials: usize, tolerance: f64) -> Result<GradCheckReport> {
    grad_check_with_fault(shape, trials, tolerance, None)
}

#[doc(hidden)]
pub fn grad_check_with_fault(
    shape: &GradCheckShape,
    trials: usize,
    tolerance: f64,
    fault: Option<GradientFault>,
) -> Result<GradCheckReport> {
    shape.validate()?;
    let eps = DEFAULT_EPSILON;
    let mut worst: Vec<BlockCheck> = Vec::new();

    for trial in 0..trials {
        let (mut model, inputs, targets) = random_instance(shape, shape.seed.wrapping_add(trial as u64))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (preds, cache) = forward(&model, inputs.view(), Mode::Train(&mut rng))?;
        let seed = mse_gradient(preds.as_slice().unwrap(), targets.as_slice().unwrap());
        let grads = backward_with_fault(&model, &cache, &seed, fault)?;
        let analytic: Vec<(String, Vec<f64>)> = grads
            .blocks()
            .into_iter()
            .map(|(name, b)| (name, b.to_vec()))
            .collect();

        if worst.is_empty() {
            worst = analytic
                .iter()
                .map(|(name, b)| BlockCheck {
                    block: name.clone(),
                    parameters: b.len(),
                    max_relative_error: 0.0,
                    passed: true,
                })
                .collect();
        }

        for (k, (_, g)) in analytic.iter().enumerate() {
            for (i, &ga) in g.iter().enumerate() {
                let original = model.trainable_blocks()[k].1[i];
                model.trainable_blocks_mut()[k][i] = original + eps;
                let plus = train_loss(&model, &inputs, &targets);
                model.trainable_blocks_mut()[k][i] = original - eps;
                let minus = train_loss(&model, &inputs, &targets);
                model.trainable_blocks_mut()[k][i] = original;
                let numeric = (plus - minus) / (2.0 * eps);
                let err = relative_error(ga, numeric);
                let entry = &mut worst[k];
                entry.max_relative_error = entry.max_relative_error.max(err);
            }
        }
    }
    for entry in &mut worst {
        entry.passed = entry.max_relative_error < tolerance;
    }
    Ok(GradCheckReport {
        trials,
        tolerance,
        epsilon: eps,
        blocks: worst,
    })
}
