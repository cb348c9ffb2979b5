//! Forward pass and backpropagation through time.
//!
//! Sequences are laid out time-major as `[steps * batch, features]`, so
//! row `t * batch + i` holds sample `i` at step `t` and every per-step slice
//! is a contiguous row block.

use ndarray::{s, Array1, Array2, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::{BatchNorm, BiLstmLayer, BiLstmModel, Dense, LstmCellParams, BATCH_NORM_EPSILON, BATCH_NORM_MOMENTUM};
use crate::error::{Error, Result};

pub enum Mode<'a> {
    /// Batch statistics for batch norm, dropout drawn from the generator.
    Train(&'a mut ChaCha8Rng),
    /// Running statistics, no dropout.
    Infer,
}

/// Deliberate gradient defects, used to check that the gradient checker
/// notices broken backward paths.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientFault {
    /// Drop the gradient carried through `h_{t-1}` into the previous step.
    DropRecurrentPath,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// Activated gates (i, f, g, o) per position.
    gates: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    hidden: Array2<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    forward: DirectionCache,
    backward: DirectionCache,
    dropout_mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
struct BatchNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    training: bool,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    steps: usize,
    training: bool,
    parameter_count: usize,
    layers: Vec<LayerCache>,
    representation: Array2<f64>,
    batch_norm: Option<BatchNormCache>,
    head_input: Array2<f64>,
    hidden_pre: Option<Array2<f64>>,
    hidden_act: Option<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Pre-head representation (before batch norm), `[batch, width]`.
    pub fn representation(&self) -> &Array2<f64> {
        &self.representation
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn to_time_major(batch: &ArrayView3<f64>) -> Array2<f64> {
    let (b, t, d) = batch.dim();
    let mut out = Array2::zeros((t * b, d));
    for step in 0..t {
        out.slice_mut(s![step * b..(step + 1) * b, ..])
            .assign(&batch.slice(s![.., step, ..]));
    }
    out
}

fn run_direction(cell: &LstmCellParams, x: &Array2<f64>, steps: usize, batch: usize, reverse: bool) -> DirectionCache {
    let h = cell.hidden_size();
    let rows = steps * batch;
    let mut gates = x.dot(&cell.input_weights.t());
    gates += &cell.biases;
    let mut cell_state = Array2::<f64>::zeros((rows, h));
    let mut tanh_cell = Array2::<f64>::zeros((rows, h));
    let mut hidden = Array2::<f64>::zeros((rows, h));
    let mut h_prev = Array2::<f64>::zeros((batch, h));
    let mut c_prev = Array2::<f64>::zeros((batch, h));

    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let r0 = t * batch;
        let recurrent = h_prev.dot(&cell.recurrent_weights.t());
        for i in 0..batch {
            let z = gates.row_mut(r0 + i);
            let z = z.into_slice().expect("row-major");
            let rec = recurrent.row(i);
            let rec = rec.as_slice().expect("row-major");
            for j in 0..h {
                let ig = sigmoid(z[j] + rec[j]);
                let fg = sigmoid(z[h + j] + rec[h + j]);
                let gg = (z[2 * h + j] + rec[2 * h + j]).tanh();
                let og = sigmoid(z[3 * h + j] + rec[3 * h + j]);
                z[j] = ig;
                z[h + j] = fg;
                z[2 * h + j] = gg;
                z[3 * h + j] = og;
                let c = fg * c_prev[[i, j]] + ig * gg;
                let tc = c.tanh();
                cell_state[[r0 + i, j]] = c;
                tanh_cell[[r0 + i, j]] = tc;
                hidden[[r0 + i, j]] = og * tc;
            }
        }
        h_prev.assign(&hidden.slice(s![r0..r0 + batch, ..]));
        c_prev.assign(&cell_state.slice(s![r0..r0 + batch, ..]));
    }
    DirectionCache {
        gates,
        cell: cell_state,
        tanh_cell,
        hidden,
    }
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn layer_output(layer: &BiLstmLayer, fwd: &DirectionCache, bwd: &DirectionCache, steps: usize, batch: usize) -> Array2<f64> {
    let h = layer.hidden_size;
    if layer.returns_sequence {
        let mut out = Array2::zeros((steps * batch, 2 * h));
        out.slice_mut(s![.., ..h]).assign(&fwd.hidden);
        out.slice_mut(s![.., h..]).assign(&bwd.hidden);
        out
    } else {
        let last = (steps - 1) * batch;
        let mut out = Array2::zeros((batch, 2 * h));
        out.slice_mut(s![.., ..h])
            .assign(&fwd.hidden.slice(s![last..last + batch, ..]));
        out.slice_mut(s![.., h..])
            .assign(&bwd.hidden.slice(s![0..batch, ..]));
        out
    }
}

fn dense_forward(dense: &Dense, x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.dot(&dense.weights.t());
    out += &dense.bias;
    out
}

fn batch_norm_forward(bn: &BatchNorm, x: &Array2<f64>, training: bool) -> (Array2<f64>, BatchNormCache) {
    let n = x.nrows() as f64;
    let (mean, var) = if training {
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = x - &mean;
        let var = (&centered * &centered).sum_axis(Axis(0)) / n;
        (mean, var)
    } else {
        (bn.running_mean.clone(), bn.running_var.clone())
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BATCH_NORM_EPSILON).sqrt());
    let normalized = (x - &mean) * &inv_std;
    let out = &normalized * &bn.scale + &bn.shift;
    (
        out,
        BatchNormCache {
            normalized,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            training,
        },
    )
}

/// Runs the network on `batch` (`[b, steps, input_dim]`) and returns one
/// prediction per row plus the cache for [`backward`].
pub fn forward(model: &BiLstmModel, batch: ArrayView3<f64>, mode: Mode<'_>) -> Result<(Array1<f64>, ForwardCache)> {
    let (b, steps, d) = batch.dim();
    if d != model.input_dim() {
        return Err(Error::shape("feature axis", model.input_dim(), d));
    }
    if steps == 0 {
        return Err(Error::shape("time axis", 1, 0));
    }
    if b == 0 {
        return Err(Error::shape("batch axis", 1, 0));
    }
    let (training, mut rng) = match mode {
        Mode::Train(rng) => (true, Some(rng)),
        Mode::Infer => (false, None),
    };
    let p = model.architecture.dropout;

    let mut x = to_time_major(&batch);
    let mut layers = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let fwd = run_direction(&layer.forward_cell, &x, steps, b, false);
        let bwd = run_direction(&layer.backward_cell, &x, steps, b, true);
        let mut out = layer_output(layer, &fwd, &bwd, steps, b);
        let mask = match rng.as_deref_mut() {
            Some(rng) if p > 0.0 => {
                let m = dropout_mask(out.nrows(), out.ncols(), p, rng);
                out *= &m;
                Some(m)
            }
            _ => None,
        };
        layers.push(LayerCache {
            input: std::mem::replace(&mut x, out),
            forward: fwd,
            backward: bwd,
            dropout_mask: mask,
        });
    }
    let representation = if model.layers.is_empty() {
        x.slice(s![(steps - 1) * b.., ..]).to_owned()
    } else {
        x
    };

    let (head_input, batch_norm) = match &model.batch_norm {
        Some(bn) => {
            let (out, cache) = batch_norm_forward(bn, &representation, training);
            (out, Some(cache))
        }
        None => (representation.clone(), None),
    };

    let (hidden_pre, hidden_act, last) = match &model.dense_hidden {
        Some(dense) => {
            let pre = dense_forward(dense, &head_input);
            let act = pre.mapv(|v| v.max(0.0));
            let out = dense_forward(&model.dense_out, &act);
            (Some(pre), Some(act), out)
        }
        None => (None, None, dense_forward(&model.dense_out, &head_input)),
    };
    let predictions = last.column(0).to_owned();

    Ok((
        predictions,
        ForwardCache {
            batch: b,
            steps,
            training,
            parameter_count: model.parameter_count(),
            layers,
            representation,
            batch_norm,
            head_input,
            hidden_pre,
            hidden_act,
        },
    ))
}

/// Inference-mode predictions; pure with respect to the model.
pub fn predict(model: &BiLstmModel, batch: ArrayView3<f64>) -> Result<Array1<f64>> {
    forward(model, batch, Mode::Infer).map(|(p, _)| p)
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::shape("predictions", targets.len(), predictions.len()));
    }
    if targets.is_empty() {
        return Err(Error::shape("predictions", 1, 0));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (y - p) * (y - p))
        .sum();
    Ok(sum / targets.len() as f64)
}

/// dL/dpred for the mean squared error.
pub fn mse_gradient(predictions: &[f64], targets: &[f64]) -> Array1<f64> {
    let n = targets.len() as f64;
    predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| 2.0 * (p - y) / n)
        .collect()
}

/// Parameter gradients, stored in a model-shaped container.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub BiLstmModel);

impl Gradients {
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        self.0.trainable_blocks()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct CellGrads {
    input_weights: Array2<f64>,
    recurrent_weights: Array2<f64>,
    biases: Array1<f64>,
}

#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    cell: &LstmCellParams,
    input: &Array2<f64>,
    cache: &DirectionCache,
    d_hidden: &Array2<f64>,
    steps: usize,
    batch: usize,
    reverse: bool,
    fault: Option<GradientFault>,
) -> (CellGrads, Array2<f64>) {
    let h = cell.hidden_size();
    let rows = steps * batch;
    let mut dz = Array2::<f64>::zeros((rows, 4 * h));
    let mut h_prev_all = Array2::<f64>::zeros((rows, h));
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut dc_next = Array2::<f64>::zeros((batch, h));

    for k in (0..steps).rev() {
        let t = if reverse { steps - 1 - k } else { k };
        let prev = if reverse {
            (t + 1 < steps).then_some(t + 1)
        } else {
            t.checked_sub(1)
        };
        let r0 = t * batch;
        for i in 0..batch {
            let r = r0 + i;
            let g = cache.gates.row(r);
            let g = g.as_slice().expect("row-major");
            let dz_row = dz.row_mut(r).into_slice().expect("row-major");
            for j in 0..h {
                let (ig, fg, gg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = cache.tanh_cell[[r, j]];
                let c_prev = prev.map_or(0.0, |p| cache.cell[[p * batch + i, j]]);
                let dh = d_hidden[[r, j]] + dh_next[[i, j]];
                let d_og = dh * tc;
                let dc = dc_next[[i, j]] + dh * og * (1.0 - tc * tc);
                dc_next[[i, j]] = dc * fg;
                dz_row[j] = dc * gg * ig * (1.0 - ig);
                dz_row[h + j] = dc * c_prev * fg * (1.0 - fg);
                dz_row[2 * h + j] = dc * ig * (1.0 - gg * gg);
                dz_row[3 * h + j] = d_og * og * (1.0 - og);
            }
        }
        if let Some(p) = prev {
            h_prev_all
                .slice_mut(s![r0..r0 + batch, ..])
                .assign(&cache.hidden.slice(s![p * batch..(p + 1) * batch, ..]));
        }
        if fault != Some(GradientFault::DropRecurrentPath) {
            dh_next = dz.slice(s![r0..r0 + batch, ..]).dot(&cell.recurrent_weights);
        }
    }
    let grads = CellGrads {
        input_weights: dz.t().dot(input),
        recurrent_weights: dz.t().dot(&h_prev_all),
        biases: dz.sum_axis(Axis(0)),
    };
    let d_input = dz.dot(&cell.input_weights);
    (grads, d_input)
}

fn dense_backward(dense: &Dense, input: &Array2<f64>, d_out: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
    grad.weights = d_out.t().dot(input);
    grad.bias = d_out.sum_axis(Axis(0));
    d_out.dot(&dense.weights)
}

fn batch_norm_backward(bn: &BatchNorm, cache: &BatchNormCache, d_out: &Array2<f64>, grad: &mut BatchNorm) -> Array2<f64> {
    grad.scale = (d_out * &cache.normalized).sum_axis(Axis(0));
    grad.shift = d_out.sum_axis(Axis(0));
    let d_norm = d_out * &bn.scale;
    if !cache.training {
        return d_norm * &cache.inv_std;
    }
    let n = d_out.nrows() as f64;
    let sum_d = d_norm.sum_axis(Axis(0));
    let sum_dx = (&d_norm * &cache.normalized).sum_axis(Axis(0));
    let mut dx = &d_norm * n - &sum_d - &cache.normalized * &sum_dx;
    dx *= &(&cache.inv_std / n);
    dx
}

/// Exact gradients of the loss given `d_predictions = dL/dpred`.
pub fn backward(model: &BiLstmModel, cache: &ForwardCache, d_predictions: &Array1<f64>) -> Result<Gradients> {
    backward_with_fault(model, cache, d_predictions, None)
}

#[doc(hidden)]
pub fn backward_with_fault(
    model: &BiLstmModel,
    cache: &ForwardCache,
    d_predictions: &Array1<f64>,
    fault: Option<GradientFault>,
) -> Result<Gradients> {
    if cache.layers.len() != model.layers.len() || cache.parameter_count != model.parameter_count() {
        return Err(Error::State("forward cache was produced by a different model".into()));
    }
    if !cache.training {
        return Err(Error::State("backward needs a cache from a train-mode forward pass".into()));
    }
    if d_predictions.len() != cache.batch {
        return Err(Error::shape("loss gradient", cache.batch, d_predictions.len()));
    }
    let (b, steps) = (cache.batch, cache.steps);
    let mut grads = model.zeros_like();

    let d_last = d_predictions.clone().insert_axis(Axis(1));
    let d_head = match (&model.dense_hidden, &cache.hidden_pre, &cache.hidden_act) {
        (Some(dense), Some(pre), Some(act)) => {
            let d_act = dense_backward(&model.dense_out, act, &d_last, &mut grads.dense_out);
            let d_pre = d_act * &pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let g = grads.dense_hidden.as_mut().expect("same shape");
            dense_backward(dense, &cache.head_input, &d_pre, g)
        }
        _ => dense_backward(&model.dense_out, &cache.head_input, &d_last, &mut grads.dense_out),
    };

    let mut d_x = match (&model.batch_norm, &cache.batch_norm) {
        (Some(bn), Some(bc)) => {
            let g = grads.batch_norm.as_mut().expect("same shape");
            batch_norm_backward(bn, bc, &d_head, g)
        }
        _ => d_head,
    };

    for (l, (layer, lc)) in model.layers.iter().zip(&cache.layers).enumerate().rev() {
        if let Some(mask) = &lc.dropout_mask {
            d_x *= mask;
        }
        let h = layer.hidden_size;
        let (d_fwd, d_bwd) = if layer.returns_sequence {
            (d_x.slice(s![.., ..h]).to_owned(), d_x.slice(s![.., h..]).to_owned())
        } else {
            let mut f = Array2::zeros((steps * b, h));
            let mut r = Array2::zeros((steps * b, h));
            let last = (steps - 1) * b;
            f.slice_mut(s![last..last + b, ..]).assign(&d_x.slice(s![.., ..h]));
            r.slice_mut(s![0..b, ..]).assign(&d_x.slice(s![.., h..]));
            (f, r)
        };
        let (gf, dx_f) = backprop_direction(&layer.forward_cell, &lc.input, &lc.forward, &d_fwd, steps, b, false, fault);
        let (gb, dx_b) = backprop_direction(&layer.backward_cell, &lc.input, &lc.backward, &d_bwd, steps, b, true, fault);
        let gl = &mut grads.layers[l];
        for (target, g) in [(&mut gl.forward_cell, gf), (&mut gl.backward_cell, gb)] {
            target.input_weights = g.input_weights;
            target.recurrent_weights = g.recurrent_weights;
            target.biases = g.biases;
        }
        d_x = dx_f + dx_b;
    }
    Ok(Gradients(grads))
}

/// Folds the batch statistics of a train-mode pass into the running
/// estimates: `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running_stats(model: &mut BiLstmModel, cache: &ForwardCache) {
    if let (Some(bn), Some(bc)) = (&mut model.batch_norm, &cache.batch_norm) {
        if bc.training {
            let m = BATCH_NORM_MOMENTUM;
            bn.running_mean = &bn.running_mean * m + &bc.batch_mean * (1.0 - m);
            bn.running_var = &bn.running_var * m + &bc.batch_var * (1.0 - m);
        }
    }
}

/// The layer-input view used when a caller holds windows as a 2-D slice.
pub fn window_view(inputs: &ndarray::Array3<f64>, start: usize, end: usize) -> ArrayView3<'_, f64> {
    inputs.slice(s![start..end, .., ..])
}
