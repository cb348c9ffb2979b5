//! Model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "TWPCKPT\0"
//! header_len u64
//! header     header_len bytes of UTF-8 JSON (CheckpointHeader)
//! payload    f32 values of every block listed in header.blocks, in order
//! ```
//!
//! Parameters are stored in single precision. A model that has been passed
//! through [`BiLstmModel::round_to_f32`] survives a save/load cycle
//! bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, BiLstmModel};
use super::train::TrainReport;
use crate::error::{Error, Result};
use crate::timeseries::FeatureScaler;

pub const MAGIC: &[u8; 8] = b"TWPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub architecture: Architecture,
    pub scaler: FeatureScaler,
    pub window: usize,
    pub target_feature_index: usize,
    pub train_seed: u64,
    pub train_report: TrainReport,
    /// Free-form echo of the configuration that produced the model.
    pub run_config: serde_json::Value,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: BiLstmModel,
    pub scaler: FeatureScaler,
    pub window: usize,
    pub target_feature_index: usize,
    pub train_seed: u64,
    pub train_report: TrainReport,
    pub run_config: serde_json::Value,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let blocks = self.model.all_blocks();
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            architecture: self.model.architecture.clone(),
            scaler: self.scaler,
            window: self.window,
            target_feature_index: self.target_feature_index,
            train_seed: self.train_seed,
            train_report: self.train_report.clone(),
            run_config: self.run_config.clone(),
            blocks: blocks
                .iter()
                .map(|(name, b)| BlockEntry {
                    name: name.clone(),
                    len: b.len(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let total: usize = blocks.iter().map(|(_, b)| b.len()).sum();
        let mut buf = Vec::with_capacity(16 + header.len() + 4 * total);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for (_, block) in &blocks {
            for &v in block.iter() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)
            .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = 16usize
            .checked_add(header_len)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..payload_start])?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }

        let mut model = BiLstmModel::zeros(&header.architecture)?;
        let expected: Vec<(String, usize)> = model
            .all_blocks()
            .into_iter()
            .map(|(n, b)| (n, b.len()))
            .collect();
        let listed: Vec<(String, usize)> = header.blocks.iter().map(|b| (b.name.clone(), b.len)).collect();
        if expected != listed {
            return Err(bad("block table does not match the declared architecture"));
        }
        let total: usize = expected.iter().map(|(_, n)| n).sum();
        let payload = &bytes[payload_start..];
        if payload.len() != 4 * total {
            return Err(Error::Checkpoint(format!(
                "payload holds {} bytes, expected {}",
                payload.len(),
                4 * total
            )));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        for block in model.all_blocks_mut() {
            for slot in block.iter_mut() {
                *slot = values.next().expect("length checked");
            }
        }
        Ok(Self {
            model,
            scaler: header.scaler,
            window: header.window,
            target_feature_index: header.target_feature_index,
            train_seed: header.train_seed,
            train_report: header.train_report,
            run_config: header.run_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::init_model;

    fn sample() -> Checkpoint {
        let arch = Architecture {
            input_dim: 4,
            hidden_sizes: vec![3, 2],
            dense_hidden: Some(3),
            batch_norm: true,
            dropout: 0.2,
        };
        let mut model = init_model(&arch, 11).unwrap();
        if let Some(bn) = &mut model.batch_norm {
            bn.running_mean.fill(0.123456789);
            bn.running_var.fill(2.5);
        }
        Checkpoint {
            model,
            scaler: FeatureScaler {
                min: [0.0, 1.0, 2.0, 3.0],
                max: [10.0, 11.0, 12.5, 13.0],
            },
            window: 6,
            target_feature_index: 0,
            train_seed: 42,
            train_report: TrainReport {
                train_loss: vec![0.5, 0.25],
                val_loss: vec![0.4, 0.3],
                learning_rates: vec![1e-4, 1e-4],
                best_epoch: 2,
                stopped_early: false,
                final_learning_rate: 1e-4,
            },
            run_config: serde_json::json!({"window": 6}),
        }
    }

    #[test]
    fn roundtrip_is_exact_after_f32_rounding() {
        let mut ck = sample();
        ck.model.round_to_f32();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn unrounded_model_is_rounded_on_save() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        let mut rounded = ck.model.clone();
        rounded.round_to_f32();
        assert_eq!(back.model, rounded);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(Checkpoint::read_from(&b"nope"[..]).is_err());
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(Checkpoint::read_from(buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
