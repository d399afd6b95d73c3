//! The forecasting model: three affine maps shared across channels.
//!
//! A history column is decomposed into trend and season. The trend map
//! turns the trend component into M candidate trend forecasts, the season
//! map turns the seasonal component into K candidate seasonal forecasts,
//! and their pairwise sums form the N = M * K scenarios. A third map reads
//! the undecomposed history and emits one logit per scenario; the softmax
//! of those logits is the per-channel probability vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{Scaler, ScalerKind};
use crate::decompose::decompose;
use crate::error::{PrismError, Result};
use crate::math::{affine, softmax, Matrix};

/// Model hyperparameters. `scenarios` always equals
/// `trend_count * season_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrismConfig {
    pub history_len: usize,
    pub horizon: usize,
    pub scenarios: usize,
    pub trend_count: usize,
    pub season_count: usize,
    pub kernel: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub scaler_kind: ScalerKind,
}

impl PrismConfig {
    /// Config with the stock hyperparameters (kernel 7, epsilon 0.01,
    /// lambda 1, mean scaler); `scenarios` is factorized into the two
    /// closest trend/season counts.
    pub fn new(history_len: usize, horizon: usize, scenarios: usize) -> Result<Self> {
        let (trend_count, season_count) = factorize_n(scenarios)?;
        let cfg = Self {
            history_len,
            horizon,
            scenarios,
            trend_count,
            season_count,
            kernel: 7,
            epsilon: 0.01,
            lambda: 1.0,
            scaler_kind: ScalerKind::Mean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.horizon == 0 {
            return Err(PrismError::Config(format!(
                "history length {} and horizon {} must be positive",
                self.history_len, self.horizon
            )));
        }
        if self.scenarios == 0 || self.trend_count * self.season_count != self.scenarios {
            return Err(PrismError::Config(format!(
                "scenario count {} must equal trend_count {} * season_count {}",
                self.scenarios, self.trend_count, self.season_count
            )));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(PrismError::Config(format!(
                "kernel {} must be odd and positive",
                self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(PrismError::Config(format!(
                "epsilon {} must lie in [0, 1)",
                self.epsilon
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(PrismError::Config(format!(
                "lambda {} must be finite and nonnegative",
                self.lambda
            )));
        }
        Ok(())
    }
}

impl Default for PrismConfig {
    fn default() -> Self {
        Self::new(24, 24, 625).expect("default config is valid")
    }
}

/// Splits N into the factor pair M * K = N minimizing |M - K|, M <= K.
pub fn factorize_n(n: usize) -> Result<(usize, usize)> {
    if n == 0 {
        return Err(PrismError::Config("scenario count must be positive".into()));
    }
    let mut m = (n as f64).sqrt().floor() as usize;
    m = m.min(n).max(1);
    while m >= 1 {
        if n.is_multiple_of(m) {
            return Ok((m, n / m));
        }
        m -= 1;
    }
    unreachable!("1 always divides n")
}

/// The six learnable blocks. One parameter set serves all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrismParams {
    /// `[M*T x L]`; output block m is trend forecast m.
    pub trend_weight: Matrix,
    pub trend_bias: Vec<f64>,
    /// `[K*T x L]`; output block k is seasonal forecast k.
    pub season_weight: Matrix,
    pub season_bias: Vec<f64>,
    /// `[N x L]`; one logit per scenario.
    pub prob_weight: Matrix,
    pub prob_bias: Vec<f64>,
}

/// Canonical order and names of the parameter blocks when flattened.
pub const BLOCK_NAMES: [&str; 6] = [
    "trend_weight",
    "trend_bias",
    "season_weight",
    "season_bias",
    "prob_weight",
    "prob_bias",
];

impl PrismParams {
    /// Weights drawn uniformly from `[-1/sqrt(L), 1/sqrt(L)]` by a ChaCha8
    /// generator seeded with `seed` (trend block first, then season, then
    /// probability, row-major within each); biases start at zero.
    pub fn init(config: &PrismConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let l = config.history_len;
        let bound = 1.0 / (l as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-bound, bound)
            .map_err(|e| PrismError::Config(format!("init distribution: {e}")))?;
        let mut draw = |rows: usize, cols: usize| -> Matrix {
            let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            Matrix::new(rows, cols, data).expect("sampled values are finite")
        };
        Ok(Self {
            trend_weight: draw(config.trend_count * config.horizon, l),
            trend_bias: vec![0.0; config.trend_count * config.horizon],
            season_weight: draw(config.season_count * config.horizon, l),
            season_bias: vec![0.0; config.season_count * config.horizon],
            prob_weight: draw(config.scenarios, l),
            prob_bias: vec![0.0; config.scenarios],
        })
    }

    /// All-zero parameter set of the shapes the config demands. Also used
    /// as the accumulator shape for gradients.
    pub fn zeros(config: &PrismConfig) -> Self {
        Self {
            trend_weight: Matrix::zeros(config.trend_count * config.horizon, config.history_len),
            trend_bias: vec![0.0; config.trend_count * config.horizon],
            season_weight: Matrix::zeros(config.season_count * config.horizon, config.history_len),
            season_bias: vec![0.0; config.season_count * config.horizon],
            prob_weight: Matrix::zeros(config.scenarios, config.history_len),
            prob_bias: vec![0.0; config.scenarios],
        }
    }

    pub fn matches_config(&self, config: &PrismConfig) -> Result<()> {
        let l = config.history_len;
        let mt = config.trend_count * config.horizon;
        let kt = config.season_count * config.horizon;
        let ok = self.trend_weight.rows() == mt
            && self.trend_weight.cols() == l
            && self.trend_bias.len() == mt
            && self.season_weight.rows() == kt
            && self.season_weight.cols() == l
            && self.season_bias.len() == kt
            && self.prob_weight.rows() == config.scenarios
            && self.prob_weight.cols() == l
            && self.prob_bias.len() == config.scenarios;
        if ok {
            Ok(())
        } else {
            Err(PrismError::Shape(
                "parameter block shapes do not match the configuration".into(),
            ))
        }
    }

    fn blocks(&self) -> [&[f64]; 6] {
        [
            self.trend_weight.as_slice(),
            &self.trend_bias,
            self.season_weight.as_slice(),
            &self.season_bias,
            self.prob_weight.as_slice(),
            &self.prob_bias,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.trend_weight.as_mut_slice(),
            &mut self.trend_bias,
            self.season_weight.as_mut_slice(),
            &mut self.season_bias,
            self.prob_weight.as_mut_slice(),
            &mut self.prob_bias,
        ]
    }

    pub fn flat_len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Concatenates the blocks in [`BLOCK_NAMES`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.flat_len());
        for block in self.blocks() {
            flat.extend_from_slice(block);
        }
        flat
    }

    /// Writes a flat vector (in [`BLOCK_NAMES`] order) back into the
    /// blocks, rejecting non-finite values.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(PrismError::Shape(format!(
                "flat vector has {} entries, parameters need {}",
                flat.len(),
                self.flat_len()
            )));
        }
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(PrismError::Numeric(format!(
                "non-finite parameter value in block {}",
                self.block_name_at(i)
            )));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    /// Name of the block that owns a flat index.
    pub fn block_name_at(&self, flat_index: usize) -> &'static str {
        let mut offset = 0;
        for (block, name) in self.blocks().iter().zip(BLOCK_NAMES) {
            offset += block.len();
            if flat_index < offset {
                return name;
            }
        }
        "out of range"
    }

    /// Accumulates `other` into `self`, block by block.
    pub fn add_assign(&mut self, other: &PrismParams) -> Result<()> {
        if self.flat_len() != other.flat_len() {
            return Err(PrismError::Shape("parameter sets differ in size".into()));
        }
        let theirs = other.blocks();
        for (mine, other_block) in self.blocks_mut().into_iter().zip(theirs) {
            for (a, &b) in mine.iter_mut().zip(other_block) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Multiplies every entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Non-finite check with the offending block named.
    pub fn check_finite(&self) -> Result<()> {
        for (block, name) in self.blocks().iter().zip(BLOCK_NAMES) {
            if let Some(i) = block.iter().position(|v| !v.is_finite()) {
                return Err(PrismError::Numeric(format!(
                    "non-finite value {} in block {name} at offset {i}",
                    block[i]
                )));
            }
        }
        Ok(())
    }
}

/// Gradients share the parameter layout.
pub type PrismGrads = PrismParams;

/// N scenarios with per-channel logits and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioForecast {
    /// `scenarios[n]` is the `[T x D]` trajectory of scenario n; its
    /// column d is the per-channel scenario with the same index n.
    pub scenarios: Vec<Matrix>,
    /// `[N x D]`, one logit column per channel.
    pub logits: Matrix,
    /// `[N x D]`, softmax of each logit column.
    pub probabilities: Matrix,
}

/// Which units the returned scenarios use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSpace {
    /// Leave scenarios in the normalized space the model computes in
    /// (losses and metrics live here).
    Scaled,
    /// Invert the scaler so scenarios are in the units of the input data.
    Original,
}

/// All pairwise sums: output row `m * K + k` is `trend_set` row m plus
/// `season_set` row k.
pub fn combine_scenarios(trend_set: &Matrix, season_set: &Matrix) -> Result<Matrix> {
    if trend_set.cols() != season_set.cols() {
        return Err(PrismError::Shape(format!(
            "trend forecasts have length {}, season forecasts {}",
            trend_set.cols(),
            season_set.cols()
        )));
    }
    let (m_count, k_count, horizon) = (trend_set.rows(), season_set.rows(), trend_set.cols());
    let mut combined = Matrix::zeros(m_count * k_count, horizon);
    for m in 0..m_count {
        for k in 0..k_count {
            let n = m * k_count + k;
            for t in 0..horizon {
                combined.set(n, t, trend_set.get(m, t) + season_set.get(k, t));
            }
        }
    }
    Ok(combined)
}

/// Single forward pass over an `[L x D]` history.
///
/// Per channel, on the scaled history column: decompose, map trend and
/// season components to their forecast sets, combine into N scenarios, and
/// read the scenario logits off the undecomposed scaled column. The same
/// parameters serve every channel.
pub fn forward(
    params: &PrismParams,
    config: &PrismConfig,
    history: &Matrix,
    scaler: &Scaler,
    space: OutputSpace,
) -> Result<ScenarioForecast> {
    config.validate()?;
    params.matches_config(config)?;
    if history.rows() != config.history_len {
        return Err(PrismError::Shape(format!(
            "history has {} rows, config expects {}",
            history.rows(),
            config.history_len
        )));
    }
    let channels = history.cols();
    if channels == 0 {
        return Err(PrismError::Shape("history has no channels".into()));
    }

    let scaled = scaler.apply(history)?;
    let parts = decompose(&scaled, config.kernel)?;

    let (n, t_len) = (config.scenarios, config.horizon);
    let mut scenarios = vec![Matrix::zeros(t_len, channels); n];
    let mut logits = Matrix::zeros(n, channels);
    let mut probabilities = Matrix::zeros(n, channels);

    for d in 0..channels {
        let trend_flat = affine(&params.trend_weight, &params.trend_bias, &parts.trend.column(d))?;
        let season_flat =
            affine(&params.season_weight, &params.season_bias, &parts.season.column(d))?;
        let trend_set = Matrix::new(config.trend_count, t_len, trend_flat)
            .map_err(|e| numeric_context(e, "trend forecasts"))?;
        let season_set = Matrix::new(config.season_count, t_len, season_flat)
            .map_err(|e| numeric_context(e, "seasonal forecasts"))?;
        let per_channel = combine_scenarios(&trend_set, &season_set)?;
        if per_channel.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(PrismError::Numeric(format!(
                "non-finite scenario value for channel {d}"
            )));
        }

        let channel_logits = affine(&params.prob_weight, &params.prob_bias, &scaled.column(d))?;
        if let Some(i) = channel_logits.iter().position(|v| !v.is_finite()) {
            return Err(PrismError::Numeric(format!(
                "non-finite logit for scenario {i}, channel {d}"
            )));
        }
        let channel_probs = softmax(&channel_logits)?;

        for s in 0..n {
            logits.set(s, d, channel_logits[s]);
            probabilities.set(s, d, channel_probs[s]);
            for t in 0..t_len {
                scenarios[s].set(t, d, per_channel.get(s, t));
            }
        }
    }

    if space == OutputSpace::Original {
        for s in scenarios.iter_mut() {
            *s = scaler.invert(s)?;
        }
    }

    Ok(ScenarioForecast {
        scenarios,
        logits,
        probabilities,
    })
}

fn numeric_context(err: PrismError, what: &str) -> PrismError {
    match err {
        PrismError::Numeric(msg) => PrismError::Numeric(format!("{what}: {msg}")),
        other => other,
    }
}

/// On-disk parameter container: a JSON document with a format version, the
/// configuration, and the six parameter blocks as shaped flat arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: PrismConfig,
    pub params: PrismParams,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(config: PrismConfig, params: PrismParams) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            config,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != Self::FORMAT_VERSION {
            return Err(PrismError::Config(format!(
                "checkpoint format version {} unsupported (expected {})",
                ck.format_version,
                Self::FORMAT_VERSION
            )));
        }
        ck.config.validate()?;
        ck.params.matches_config(&ck.config)?;
        Ok(ck)
    }
}
