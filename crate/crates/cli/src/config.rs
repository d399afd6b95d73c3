//! Run configuration: one JSON file drives a whole train/eval run.
//!
//! Every field has a default, so `{}` is a valid (if not very useful)
//! config; unknown keys are rejected. Relative paths inside the file are
//! resolved against the config file's directory. Command-line flags
//! (`--seed`, `--out`) override file values.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use timeprism_core::data::ScalerKind;
use timeprism_core::error::{PrismError, Result};
use timeprism_core::model::PrismConfig;
use timeprism_core::trainer::TrainConfig;

/// Where the windows come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Wide-layout CSV series; windows are cut chronologically.
    Series(PathBuf),
    /// A windows CSV as written by `timeprism synth`.
    Windows(PathBuf),
    /// A mixture spec JSON; windows are generated on the fly with the
    /// spec's own seed.
    Mixture(PathBuf),
}

impl DataSource {
    fn resolve(&mut self, base: &Path) {
        let path = match self {
            DataSource::Series(p) | DataSource::Windows(p) | DataSource::Mixture(p) => p,
        };
        if path.is_relative() {
            *path = base.join(&path);
        }
    }
}

/// Model hyperparameters; `history_len` defaults to the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub history_len: Option<usize>,
    pub horizon: usize,
    pub scenarios: usize,
    pub kernel: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub scaler: ScalerKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            history_len: None,
            horizon: 24,
            scenarios: 625,
            kernel: 7,
            epsilon: 0.01,
            lambda: 1.0,
            scaler: ScalerKind::Mean,
        }
    }
}

impl ModelSection {
    pub fn to_prism_config(&self) -> Result<PrismConfig> {
        let mut cfg = PrismConfig::new(
            self.history_len.unwrap_or(self.horizon),
            self.horizon,
            self.scenarios,
        )?;
        cfg.kernel = self.kernel;
        cfg.epsilon = self.epsilon;
        cfg.lambda = self.lambda;
        cfg.scaler_kind = self.scaler;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training hyperparameters; the run's top-level seed feeds the trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub shuffle: bool,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let tc = TrainConfig::default();
        Self {
            epochs: tc.epochs,
            lr: tc.lr,
            batch_size: tc.batch_size,
            shuffle: tc.shuffle,
            checkpoint_every: tc.checkpoint_every,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed,
            shuffle: self.shuffle,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

/// Chronological train/validation/test fractions; they must sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitSection {
    pub fn validate(&self) -> Result<()> {
        if self.train < 0.0 || self.val < 0.0 || self.test < 0.0 {
            return Err(PrismError::Config("split fractions must be nonnegative".into()));
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PrismError::Config(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Contiguous index ranges `[0, t1) / [t1, t2) / [t2, len)`.
    pub fn regions(&self, len: usize) -> (Range<usize>, Range<usize>, Range<usize>) {
        let t1 = (len as f64 * self.train).floor() as usize;
        let t2 = (len as f64 * (self.train + self.val)).floor() as usize;
        let t1 = t1.min(len);
        let t2 = t2.clamp(t1, len);
        (0..t1, t1..t2, t2..len)
    }
}

/// The whole run file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// No default: training and evaluation need a data source.
    pub data: Option<DataSource>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub split: SplitSection,
    /// Window stride for series data.
    pub stride: usize,
    /// Root seed; init/shuffle streams are derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            model: ModelSection::default(),
            train: TrainSection::default(),
            split: SplitSection::default(),
            stride: 1,
            seed: 0,
            out_dir: PathBuf::from("runs/latest"),
        }
    }
}

impl RunConfig {
    /// Parses the JSON file and resolves relative data paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PrismError::Config(format!("{}: {e}", path.display())))?;
        config.split.validate()?;
        if config.stride == 0 {
            return Err(PrismError::Config("stride must be positive".into()));
        }
        if let Some(base) = path.parent() {
            if let Some(data) = config.data.as_mut() {
                data.resolve(base);
            }
            if config.out_dir.is_relative() {
                config.out_dir = base.join(&config.out_dir);
            }
        }
        Ok(config)
    }

    pub fn require_data(&self) -> Result<&DataSource> {
        self.data
            .as_ref()
            .ok_or_else(|| PrismError::Config("config has no \"data\" source".into()))
    }
}
