//! From-scratch bidirectional LSTM forecaster: parameters, forward pass,
//! backpropagation through time, Adam, scheduling, early stopping,
//! gradient verification and checkpointing.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod network;
pub mod optim;
pub mod train;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport, GradCheckShape};
pub use model::{init_model, model_size_report, Architecture, BiLstmLayer, BiLstmModel, LstmCellParams, ModelSize};
pub use network::{backward, forward, mse_loss, predict, ForwardCache, Gradients, Mode};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use train::{predict_series, train, TrainConfig, TrainReport};
