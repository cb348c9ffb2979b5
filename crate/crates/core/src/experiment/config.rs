//! Run configuration and its flat `key = value` text form.
//!
//! Blank lines and lines starting with `#` are ignored. Every key maps to
//! one field; command-line flags are applied through the same
//! [`RunConfig::set`] entry point, after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationPolicy;
use crate::error::{Error, Result};
use crate::neural::TrainConfig;
use crate::synth::{SynthConfig, DEFAULT_PROFILE};
use crate::timeseries::{self, Feature, KpiSeries, SplitSpec};

pub const OUTPUT_DIR_ENV: &str = "TWINPROV_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// CSV input; when absent the synthetic profile is used.
    pub input: Option<PathBuf>,
    pub synth_profile: String,
    pub synth_seed: Option<u64>,
    pub synth_length: Option<usize>,
    pub window: usize,
    pub target_feature: Feature,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub allocation: AllocationPolicy,
    pub output_dir: PathBuf,
    /// Seeds model initialization and dropout.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            synth_profile: DEFAULT_PROFILE.to_string(),
            synth_seed: None,
            synth_length: None,
            window: 10,
            target_feature: Feature::Internet,
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            allocation: AllocationPolicy::default(),
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            seed: 42,
        }
    }
}

pub const KEYS: &[&str] = &[
    "input",
    "synth_profile",
    "synth_seed",
    "synth_length",
    "window",
    "target_feature",
    "train_fraction",
    "val_fraction",
    "max_epochs",
    "early_stop_patience",
    "early_stopping",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "lr_plateau_factor",
    "lr_plateau_patience",
    "lr_min",
    "allocation_floor",
    "allocation_multiplier",
    "output_dir",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input" => self.input = (!v.is_empty() && v != "none").then(|| PathBuf::from(v)),
            "synth_profile" => self.synth_profile = v.to_string(),
            "synth_seed" => self.synth_seed = optional(key, v)?,
            "synth_length" => self.synth_length = optional(key, v)?,
            "window" => self.window = parse(key, v)?,
            "target_feature" => self.target_feature = v.parse()?,
            "train_fraction" => self.split.train_fraction = parse(key, v)?,
            "val_fraction" => self.split.val_fraction_of_train = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "early_stop_patience" => self.train.early_stop_patience = parse(key, v)?,
            "early_stopping" => self.train.early_stopping = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "adam_beta1" => self.train.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.train.adam_beta2 = parse(key, v)?,
            "adam_epsilon" => self.train.adam_epsilon = parse(key, v)?,
            "lr_plateau_factor" => self.train.lr_plateau_factor = parse(key, v)?,
            "lr_plateau_patience" => self.train.lr_plateau_patience = parse(key, v)?,
            "lr_min" => self.train.lr_min = parse(key, v)?,
            "allocation_floor" => self.allocation.floor = parse(key, v)?,
            "allocation_multiplier" => self.allocation.multiplier = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Key-value text that [`Self::apply_text`] reads back to an equal config.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let t = &self.train;
        let pairs: Vec<(&str, String)> = vec![
            ("input", opt(self.input.as_ref().map(|p| p.display().to_string()))),
            ("synth_profile", self.synth_profile.clone()),
            ("synth_seed", opt(self.synth_seed.map(|s| s.to_string()))),
            ("synth_length", opt(self.synth_length.map(|s| s.to_string()))),
            ("window", self.window.to_string()),
            ("target_feature", self.target_feature.to_string()),
            ("train_fraction", self.split.train_fraction.to_string()),
            ("val_fraction", self.split.val_fraction_of_train.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("early_stop_patience", t.early_stop_patience.to_string()),
            ("early_stopping", t.early_stopping.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("adam_beta1", t.adam_beta1.to_string()),
            ("adam_beta2", t.adam_beta2.to_string()),
            ("adam_epsilon", t.adam_epsilon.to_string()),
            ("lr_plateau_factor", t.lr_plateau_factor.to_string()),
            ("lr_plateau_patience", t.lr_plateau_patience.to_string()),
            ("lr_min", t.lr_min.to_string()),
            ("allocation_floor", self.allocation.floor.to_string()),
            ("allocation_multiplier", self.allocation.multiplier.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.train.seed != self.seed {
            return Err(Error::Config(format!(
                "training seed {} differs from run seed {}",
                self.train.seed, self.seed
            )));
        }
        self.split.validate()?;
        self.train.validate()?;
        self.allocation.validate()?;
        if self.input.is_none() {
            self.synth_config()?.validate()?;
        }
        Ok(())
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let mut cfg = SynthConfig::profile(&self.synth_profile)?;
        if let Some(seed) = self.synth_seed {
            cfg.seed = seed;
        }
        if let Some(len) = self.synth_length {
            cfg.length = len;
        }
        Ok(cfg)
    }

    pub fn load_series(&self) -> Result<KpiSeries> {
        match &self.input {
            Some(path) => timeseries::load_csv(path),
            None => crate::synth::generate_traffic(&self.synth_config()?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.set("learning_rate", "0.003").unwrap();
        cfg.set("input", "data/x.csv").unwrap();
        cfg.set("synth_length", "500").unwrap();
        cfg.set("seed", "7").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let written: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(written, KEYS);
    }

    #[test]
    fn comments_and_errors() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nwindow = 6\n").unwrap();
        assert_eq!(cfg.window, 6);
        let err = cfg.apply_text("window = 6\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(cfg.apply_text("window 6").is_err());
        assert!(cfg.apply_text("window = six").is_err());
    }

    #[test]
    fn seed_drives_training_seed() {
        let mut cfg = RunConfig::default();
        cfg.set("seed", "99").unwrap();
        assert_eq!(cfg.train.seed, 99);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.set("synth_length", "0").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("batch_size", "0").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("synth_profile", "nope").unwrap();
        assert!(cfg.validate().is_err());
    }
}
