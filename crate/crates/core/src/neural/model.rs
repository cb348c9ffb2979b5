use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight kept on the running estimate at each batch-norm update.
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;
pub const BATCH_NORM_EPSILON: f64 = 1e-3;
/// Bytes per serialized parameter (single precision).
pub const BYTES_PER_PARAMETER: usize = 4;

/// Shape of a stacked BiLSTM forecaster.
///
/// Every BiLSTM layer except the last emits its full sequence; the last
/// emits `[forward final state; backward final state]`. With no recurrent
/// layers the representation is the last input step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub dense_hidden: Option<usize>,
    pub batch_norm: bool,
    pub dropout: f64,
}

impl Architecture {
    /// BiLSTM(128) -> BiLSTM(128) -> BiLSTM(64) -> BatchNorm -> Dense(64, relu) -> Dense(1).
    pub fn reference(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_sizes: vec![128, 128, 64],
            dense_hidden: Some(64),
            batch_norm: true,
            dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden_sizes.contains(&0) || self.dense_hidden == Some(0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width of the representation fed to batch norm and the dense head.
    pub fn representation_width(&self) -> usize {
        self.hidden_sizes.last().map_or(self.input_dim, |h| 2 * h)
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let mut count = 0;
        let mut d_in = self.input_dim;
        for &h in &self.hidden_sizes {
            count += 2 * 4 * (h * (d_in + h) + h);
            d_in = 2 * h;
        }
        if self.batch_norm {
            count += 2 * d_in;
        }
        if let Some(w) = self.dense_hidden {
            count += w * d_in + w;
            d_in = w;
        }
        count + d_in + 1
    }
}

/// Gate rows are stacked as (input, forget, cell candidate, output).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_weights: Array2<f64>,
    pub recurrent_weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_weights: Array2::zeros((4 * hidden, input_dim)),
            recurrent_weights: Array2::zeros((4 * hidden, hidden)),
            biases: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weights.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.ncols()
    }

    fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut cell = Self::zeros(input_dim, hidden);
        glorot_uniform(&mut cell.input_weights, rng);
        cell.recurrent_weights = orthogonal(4 * hidden, hidden, rng);
        cell.biases
            .slice_mut(ndarray::s![hidden..2 * hidden])
            .fill(1.0);
        cell
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward_cell: LstmCellParams,
    pub backward_cell: LstmCellParams,
    pub hidden_size: usize,
    pub returns_sequence: bool,
}

impl BiLstmLayer {
    pub fn output_width(&self) -> usize {
        2 * self.hidden_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// Affine map `y = W x + b` with `W` stored as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmModel {
    pub architecture: Architecture,
    pub layers: Vec<BiLstmLayer>,
    pub batch_norm: Option<BatchNorm>,
    pub dense_hidden: Option<Dense>,
    pub dense_out: Dense,
}

impl BiLstmModel {
    /// Every parameter zero; batch-norm statistics at their identity values.
    pub fn zeros(architecture: &Architecture) -> Result<Self> {
        architecture.validate()?;
        let mut d_in = architecture.input_dim;
        let n = architecture.hidden_sizes.len();
        let layers = architecture
            .hidden_sizes
            .iter()
            .enumerate()
            .map(|(l, &h)| {
                let layer = BiLstmLayer {
                    forward_cell: LstmCellParams::zeros(d_in, h),
                    backward_cell: LstmCellParams::zeros(d_in, h),
                    hidden_size: h,
                    returns_sequence: l + 1 < n,
                };
                d_in = 2 * h;
                layer
            })
            .collect();
        let width = architecture.representation_width();
        let batch_norm = architecture.batch_norm.then(|| BatchNorm::new(width));
        let dense_hidden = architecture.dense_hidden.map(|w| Dense::zeros(width, w));
        let head_in = architecture.dense_hidden.unwrap_or(width);
        Ok(Self {
            architecture: architecture.clone(),
            layers,
            batch_norm,
            dense_hidden,
            dense_out: Dense::zeros(head_in, 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input_dim
    }

    /// Trainable blocks in a fixed order, paired with stable names.
    pub fn trainable_blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (dir, cell) in [("forward", &layer.forward_cell), ("backward", &layer.backward_cell)] {
                out.push((format!("bilstm{l}.{dir}.input_weights"), slice(&cell.input_weights)));
                out.push((
                    format!("bilstm{l}.{dir}.recurrent_weights"),
                    slice(&cell.recurrent_weights),
                ));
                out.push((format!("bilstm{l}.{dir}.biases"), slice1(&cell.biases)));
            }
        }
        if let Some(bn) = &self.batch_norm {
            out.push(("batch_norm.scale".into(), slice1(&bn.scale)));
            out.push(("batch_norm.shift".into(), slice1(&bn.shift)));
        }
        if let Some(d) = &self.dense_hidden {
            out.push(("dense_hidden.weights".into(), slice(&d.weights)));
            out.push(("dense_hidden.bias".into(), slice1(&d.bias)));
        }
        out.push(("dense_out.weights".into(), slice(&self.dense_out.weights)));
        out.push(("dense_out.bias".into(), slice1(&self.dense_out.bias)));
        out
    }

    /// Mutable counterpart of [`Self::trainable_blocks`], same order.
    pub fn trainable_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks_mut(false)
    }

    /// Trainable blocks followed by batch-norm running statistics.
    pub fn all_blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = self.trainable_blocks();
        if let Some(bn) = &self.batch_norm {
            out.push(("batch_norm.running_mean".into(), slice1(&bn.running_mean)));
            out.push(("batch_norm.running_var".into(), slice1(&bn.running_var)));
        }
        out
    }

    pub fn all_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks_mut(true)
    }

    fn blocks_mut(&mut self, with_stats: bool) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let mut stats: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for cell in [&mut layer.forward_cell, &mut layer.backward_cell] {
                out.push(slice_mut(&mut cell.input_weights));
                out.push(slice_mut(&mut cell.recurrent_weights));
                out.push(slice1_mut(&mut cell.biases));
            }
        }
        if let Some(bn) = &mut self.batch_norm {
            out.push(slice1_mut(&mut bn.scale));
            out.push(slice1_mut(&mut bn.shift));
            if with_stats {
                stats.push(slice1_mut(&mut bn.running_mean));
                stats.push(slice1_mut(&mut bn.running_var));
            }
        }
        if let Some(d) = &mut self.dense_hidden {
            out.push(slice_mut(&mut d.weights));
            out.push(slice1_mut(&mut d.bias));
        }
        out.push(slice_mut(&mut self.dense_out.weights));
        out.push(slice1_mut(&mut self.dense_out.bias));
        out.extend(stats);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable_blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Rounds every stored value to the nearest single-precision float.
    pub fn round_to_f32(&mut self) {
        for block in self.all_blocks_mut() {
            for v in block.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// A model of the same shape with every value set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for block in z.all_blocks_mut() {
            block.fill(0.0);
        }
        z
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

fn glorot_uniform(w: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (fan_out, fan_in) = w.dim();
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    w.mapv_inplace(|_| rng.random_range(-limit..limit));
}

/// `rows x cols` matrix with orthonormal columns (rows >= cols), via
/// modified Gram-Schmidt on a Gaussian draw.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal));
    for j in 0..cols {
        for k in 0..j {
            let dot = q.column(j).dot(&q.column(k));
            let proj = &q.column(k) * dot;
            let mut col = q.column_mut(j);
            col -= &proj;
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

/// Seeded initialization: Glorot-uniform input and dense weights,
/// orthogonal recurrent weights, zero biases except forget gates at 1.
pub fn init_model(architecture: &Architecture, seed: u64) -> Result<BiLstmModel> {
    let mut model = BiLstmModel::zeros(architecture)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d_in = architecture.input_dim;
    for layer in &mut model.layers {
        let h = layer.hidden_size;
        layer.forward_cell = LstmCellParams::init(d_in, h, &mut rng);
        layer.backward_cell = LstmCellParams::init(d_in, h, &mut rng);
        d_in = 2 * h;
    }
    if let Some(d) = &mut model.dense_hidden {
        glorot_uniform(&mut d.weights, &mut rng);
    }
    glorot_uniform(&mut model.dense_out.weights, &mut rng);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSize {
    pub parameters: usize,
    pub size_mb: f64,
}

pub fn model_size_report(model: &BiLstmModel) -> ModelSize {
    let parameters = model.parameter_count();
    ModelSize {
        parameters,
        size_mb: (parameters * BYTES_PER_PARAMETER) as f64 / (1u64 << 20) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::reference(4);
        assert_eq!(init_model(&arch, 7).unwrap(), init_model(&arch, 7).unwrap());
        assert_ne!(init_model(&arch, 7).unwrap(), init_model(&arch, 8).unwrap());
    }

    #[test]
    fn forget_bias_is_one() {
        let arch = Architecture {
            hidden_sizes: vec![3, 5],
            ..Architecture::reference(4)
        };
        let m = init_model(&arch, 1).unwrap();
        for layer in &m.layers {
            let h = layer.hidden_size;
            for cell in [&layer.forward_cell, &layer.backward_cell] {
                assert!(cell.biases.iter().enumerate().all(|(i, b)| {
                    if (h..2 * h).contains(&i) {
                        *b == 1.0
                    } else {
                        *b == 0.0
                    }
                }));
            }
        }
    }

    #[test]
    fn recurrent_weights_have_orthonormal_columns() {
        let m = init_model(&Architecture::reference(4), 3).unwrap();
        let w = &m.layers[2].forward_cell.recurrent_weights;
        let gram = w.t().dot(w);
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn glorot_bounds() {
        let m = init_model(&Architecture::reference(4), 3).unwrap();
        let w = &m.layers[0].forward_cell.input_weights;
        let limit = (6.0f64 / (4 + 512) as f64).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn dense_only_model_has_five_parameters() {
        let arch = Architecture {
            input_dim: 4,
            hidden_sizes: vec![],
            dense_hidden: None,
            batch_norm: false,
            dropout: 0.0,
        };
        let m = BiLstmModel::zeros(&arch).unwrap();
        assert_eq!(model_size_report(&m).parameters, 5);
        assert_eq!(arch.parameter_count(), 5);
    }

    #[test]
    fn count_matches_blocks_for_various_shapes() {
        for hidden in [vec![1], vec![2, 3], vec![4, 4, 2], vec![7, 1, 5, 2]] {
            for (dense, bn) in [(None, false), (Some(3), true), (Some(6), false)] {
                let arch = Architecture {
                    input_dim: 3,
                    hidden_sizes: hidden.clone(),
                    dense_hidden: dense,
                    batch_norm: bn,
                    dropout: 0.0,
                };
                let m = BiLstmModel::zeros(&arch).unwrap();
                assert_eq!(m.parameter_count(), arch.parameter_count());
            }
        }
    }

    #[test]
    fn doubling_hidden_more_than_doubles_count() {
        let a = Architecture::reference(4);
        let b = Architecture {
            hidden_sizes: a.hidden_sizes.iter().map(|h| 2 * h).collect(),
            dense_hidden: a.dense_hidden.map(|w| 2 * w),
            ..a.clone()
        };
        assert!(b.parameter_count() > 2 * a.parameter_count());
    }

    #[test]
    fn round_to_f32_is_idempotent() {
        let mut m = init_model(&Architecture::reference(4), 9).unwrap();
        m.round_to_f32();
        let once = m.clone();
        m.round_to_f32();
        assert_eq!(m, once);
    }
}
