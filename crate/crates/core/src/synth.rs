//! Seeded synthetic data: one shared history prototype whose future is
//! drawn from a finite set of modes. The generator is the test bed for
//! everything that claims to recover multimodal structure.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Window;
use crate::error::{PrismError, Result};
use crate::math::Matrix;

/// Specification of a finite-mixture dataset: every instance shares a
/// noisy copy of `history_prototype`, and its future is one of the
/// `mode_futures` (drawn by `mode_weights`) plus Gaussian noise.
///
/// Serialized as JSON with exactly these field names; matrices are arrays
/// of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub modes: usize,
    pub mode_weights: Vec<f64>,
    /// `[L x D]` rows.
    pub history_prototype: Vec<Vec<f64>>,
    /// `modes` matrices of `[T x D]` rows.
    pub mode_futures: Vec<Vec<Vec<f64>>>,
    pub noise_std: f64,
    pub instances: usize,
    pub seed: u64,
}

/// Output of [`generate_mixture`]: the windows plus the ground-truth mode
/// index that produced each one.
#[derive(Debug, Clone)]
pub struct MixtureData {
    pub windows: Vec<Window>,
    pub mode_assignment: Vec<usize>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 || self.mode_weights.len() != self.modes {
            return Err(PrismError::Validation(format!(
                "mode_weights has {} entries for {} modes",
                self.mode_weights.len(),
                self.modes
            )));
        }
        if self.mode_weights.iter().any(|&w| w < 0.0) {
            return Err(PrismError::Validation("mode_weights must be nonnegative".into()));
        }
        let sum: f64 = self.mode_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PrismError::Validation(format!(
                "mode_weights sum to {sum}, expected 1 within 1e-9"
            )));
        }
        if self.noise_std < 0.0 {
            return Err(PrismError::Validation(format!(
                "noise_std must be nonnegative, got {}",
                self.noise_std
            )));
        }
        if self.instances == 0 {
            return Err(PrismError::Validation("instances must be positive".into()));
        }
        if self.history_prototype.is_empty() || self.history_prototype[0].is_empty() {
            return Err(PrismError::Validation("history_prototype is empty".into()));
        }
        let channels = self.history_prototype[0].len();
        if self.mode_futures.len() != self.modes {
            return Err(PrismError::Validation(format!(
                "mode_futures has {} entries for {} modes",
                self.mode_futures.len(),
                self.modes
            )));
        }
        let horizon = self.mode_futures[0].len();
        if horizon == 0 {
            return Err(PrismError::Validation("mode futures are empty".into()));
        }
        for (j, future) in self.mode_futures.iter().enumerate() {
            if future.len() != horizon || future.iter().any(|row| row.len() != channels) {
                return Err(PrismError::Validation(format!(
                    "mode future {j} does not match shape {horizon}x{channels}"
                )));
            }
        }
        if self.history_prototype.iter().any(|row| row.len() != channels) {
            return Err(PrismError::Validation("ragged history_prototype".into()));
        }
        Ok(())
    }

    pub fn history_len(&self) -> usize {
        self.history_prototype.len()
    }

    pub fn horizon(&self) -> usize {
        self.mode_futures.first().map_or(0, Vec::len)
    }

    pub fn channels(&self) -> usize {
        self.history_prototype.first().map_or(0, Vec::len)
    }
}

/// Draws `instances` windows from the mixture. The stream is a single
/// ChaCha8 generator seeded with `spec.seed`; per instance it emits the
/// history noise (row-major), one uniform draw for the mode, then the
/// future noise (row-major), so output is bit-reproducible given the seed.
pub fn generate_mixture(spec: &MixtureSpec) -> Result<MixtureData> {
    spec.validate()?;
    let (history_len, horizon, channels) = (spec.history_len(), spec.horizon(), spec.channels());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| PrismError::Validation(format!("noise distribution: {e}")))?;

    let mut windows = Vec::with_capacity(spec.instances);
    let mut assignment = Vec::with_capacity(spec.instances);
    for instance in 0..spec.instances {
        let mut history = Matrix::zeros(history_len, channels);
        for t in 0..history_len {
            for d in 0..channels {
                history.set(t, d, spec.history_prototype[t][d] + noise.sample(&mut rng));
            }
        }

        let u: f64 = rng.random();
        let mut mode = spec.modes - 1;
        let mut cum = 0.0;
        for (j, &w) in spec.mode_weights.iter().enumerate() {
            cum += w;
            if u < cum {
                mode = j;
                break;
            }
        }

        let mut future = Matrix::zeros(horizon, channels);
        for t in 0..horizon {
            for d in 0..channels {
                future.set(t, d, spec.mode_futures[mode][t][d] + noise.sample(&mut rng));
            }
        }

        windows.push(Window {
            history,
            future,
            origin_index: instance,
        });
        assignment.push(mode);
    }
    Ok(MixtureData {
        windows,
        mode_assignment: assignment,
    })
}
