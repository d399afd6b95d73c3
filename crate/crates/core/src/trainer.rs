//! Mini-batch training loop: seeded shuffling, mean gradients per batch,
//! one Adam step per batch. Single-threaded by construction, so a run is
//! fully determined by its seed.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, Scaler, ScalerKind, Window};
use crate::error::{PrismError, Result};
use crate::loss::backward;
use crate::metrics::evaluate;
use crate::model::{PrismConfig, PrismGrads, PrismParams};
use crate::optim::AdamState;
use crate::seeds::derive_seed;

/// Training hyperparameters. The seed fans out to the parameter-init and
/// shuffle streams (see [`crate::seeds`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Every this many epochs, compute validation CRPS (when a validation
    /// split was provided). 0 disables it.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            batch_size: 100,
            seed: 0,
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PrismError::Config(format!(
                "epochs {} and batch_size {} must be positive",
                self.epochs, self.batch_size
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(PrismError::Config(format!(
                "learning rate {} must be finite and nonnegative",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One completed epoch: mean training losses, optional validation CRPS,
/// wall time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub prob: f64,
    pub val_crps: Option<f64>,
    pub wall_secs: f64,
}

/// Per-epoch records for a whole run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

/// Mean loss components over one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub recon: f64,
    pub prob: f64,
}

/// Mean loss and mean gradient over `batch` (window/scaler pairs),
/// accumulated in slice order so the reduction is deterministic.
pub fn batch_gradient(
    params: &PrismParams,
    config: &PrismConfig,
    batch: &[(&Window, &Scaler)],
) -> Result<(BatchLoss, PrismGrads)> {
    if batch.is_empty() {
        return Err(PrismError::Config("empty batch".into()));
    }
    let mut grads = PrismGrads::zeros(config);
    let mut total = 0.0;
    let mut recon = 0.0;
    let mut prob = 0.0;
    for (window, scaler) in batch {
        let (breakdown, g) = backward(params, config, window, scaler)?;
        grads.add_assign(&g)?;
        total += breakdown.total;
        recon += breakdown.recon;
        prob += breakdown.prob;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((
        BatchLoss {
            total: total * inv,
            recon: recon * inv,
            prob: prob * inv,
        },
        grads,
    ))
}

/// Trains from scratch on `windows`. See [`train_with_validation`].
pub fn train(
    windows: &[Window],
    config: &PrismConfig,
    tc: &TrainConfig,
) -> Result<(PrismParams, TrainHistory)> {
    train_with_validation(windows, None, config, tc)
}

/// Trains from scratch on `windows`, optionally scoring a validation
/// split every `checkpoint_every` epochs.
///
/// Parameters are initialized from the seed's `init` stream; each epoch
/// the window order is reshuffled from the `shuffle` stream, per-window
/// gradients are averaged over each batch (the last partial batch is
/// kept), and one Adam step is applied per batch. Per-window scalers are
/// fit once on each window's history. The run is bit-reproducible given
/// `(windows, config, tc)`.
pub fn train_with_validation(
    windows: &[Window],
    validation: Option<&[Window]>,
    config: &PrismConfig,
    tc: &TrainConfig,
) -> Result<(PrismParams, TrainHistory)> {
    config.validate()?;
    tc.validate()?;
    if windows.is_empty() {
        return Err(PrismError::Config("no training windows".into()));
    }
    let channels = windows[0].channels();
    for (i, w) in windows.iter().enumerate() {
        if w.history.rows() != config.history_len
            || w.future.rows() != config.horizon
            || w.channels() != channels
            || w.future.cols() != channels
        {
            return Err(PrismError::Shape(format!(
                "window {i} is {}x{} -> {}x{}, config expects {} -> {} with {channels} channels",
                w.history.rows(),
                w.history.cols(),
                w.future.rows(),
                w.future.cols(),
                config.history_len,
                config.horizon
            )));
        }
    }

    let mut params = PrismParams::init(config, derive_seed(tc.seed, "init"))?;
    let scalers = fit_all_scalers(windows, config.scaler_kind)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "shuffle"));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut adam = AdamState::new(params.flat_len(), tc.lr);
    let mut flat = params.to_flat();
    let mut history = TrainHistory::default();

    for epoch in 1..=tc.epochs {
        let started = Instant::now();
        if tc.shuffle {
            order.shuffle(&mut shuffle_rng);
        }

        let mut total_sum = 0.0;
        let mut recon_sum = 0.0;
        let mut prob_sum = 0.0;
        for (batch_no, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<(&Window, &Scaler)> =
                chunk.iter().map(|&i| (&windows[i], &scalers[i])).collect();
            let located = |e: PrismError| locate(e, epoch, batch_no);

            let (batch_loss, grads) = batch_gradient(&params, config, &batch).map_err(located)?;
            let grad_flat = grads.to_flat();
            adam.step(&mut flat, &grad_flat)
                .map_err(|e| locate(name_block(e, &params), epoch, batch_no))?;
            params
                .assign_from_flat(&flat)
                .map_err(|e| locate(e, epoch, batch_no))?;

            let weight = chunk.len() as f64;
            total_sum += batch_loss.total * weight;
            recon_sum += batch_loss.recon * weight;
            prob_sum += batch_loss.prob * weight;
        }

        let count = windows.len() as f64;
        let val_crps = match validation {
            Some(val)
                if tc.checkpoint_every > 0
                    && epoch % tc.checkpoint_every == 0
                    && !val.is_empty() =>
            {
                Some(evaluate(&params, config, config.scaler_kind, val)?.crps)
            }
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            total: total_sum / count,
            recon: recon_sum / count,
            prob: prob_sum / count,
            val_crps,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }

    Ok((params, history))
}

fn fit_all_scalers(windows: &[Window], kind: ScalerKind) -> Result<Vec<Scaler>> {
    windows.iter().map(|w| fit_scaler(&w.history, kind)).collect()
}

fn locate(e: PrismError, epoch: usize, batch: usize) -> PrismError {
    match e {
        PrismError::Numeric(msg) => {
            PrismError::Numeric(format!("epoch {epoch}, batch {batch}: {msg}"))
        }
        other => other,
    }
}

fn name_block(e: PrismError, params: &PrismParams) -> PrismError {
    // Adam reports the flat index; translate it to the block name.
    if let PrismError::Numeric(msg) = &e {
        if let Some(idx) = msg
            .rsplit_once("flat index ")
            .and_then(|(_, tail)| tail.trim().parse::<usize>().ok())
        {
            return PrismError::Numeric(format!(
                "{msg} (block {})",
                params.block_name_at(idx)
            ));
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_mixture, MixtureSpec};

    fn tiny_windows(count: usize, channels: usize) -> Vec<Window> {
        let spec = MixtureSpec {
            modes: 2,
            mode_weights: vec![0.5, 0.5],
            history_prototype: (0..4).map(|t| vec![1.0 + t as f64 * 0.2; channels]).collect(),
            mode_futures: vec![
                (0..4).map(|_| vec![2.0; channels]).collect(),
                (0..4).map(|_| vec![-1.0; channels]).collect(),
            ],
            noise_std: 0.05,
            instances: count,
            seed: 12,
        };
        generate_mixture(&spec).unwrap().windows
    }

    fn tiny_config() -> PrismConfig {
        let mut cfg = PrismConfig::new(4, 4, 4).unwrap();
        cfg.kernel = 3;
        cfg
    }

    #[test]
    fn zero_learning_rate_keeps_initial_params() {
        let cfg = tiny_config();
        let windows = tiny_windows(12, 1);
        let tc = TrainConfig {
            epochs: 3,
            lr: 0.0,
            batch_size: 5,
            seed: 42,
            ..TrainConfig::default()
        };
        let (params, history) = train(&windows, &cfg, &tc).unwrap();
        let init = PrismParams::init(&cfg, derive_seed(42, "init")).unwrap();
        assert_eq!(params, init);
        assert_eq!(history.epochs.len(), 3);
    }

    #[test]
    fn single_step_matches_manual_backward_plus_adam() {
        let cfg = tiny_config();
        let windows = tiny_windows(1, 2);
        let tc = TrainConfig {
            epochs: 1,
            lr: 1e-3,
            batch_size: 1,
            seed: 7,
            shuffle: false,
            checkpoint_every: 0,
        };
        let (trained, _) = train(&windows, &cfg, &tc).unwrap();

        let mut params = PrismParams::init(&cfg, derive_seed(7, "init")).unwrap();
        let scaler = fit_scaler(&windows[0].history, cfg.scaler_kind).unwrap();
        let (_, grads) = backward(&params, &cfg, &windows[0], &scaler).unwrap();
        let mut adam = AdamState::new(params.flat_len(), 1e-3);
        let mut flat = params.to_flat();
        adam.step(&mut flat, &grads.to_flat()).unwrap();
        params.assign_from_flat(&flat).unwrap();

        assert_eq!(trained, params);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_config();
        let windows = tiny_windows(20, 1);
        let tc = TrainConfig {
            epochs: 4,
            batch_size: 7,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ha) = train(&windows, &cfg, &tc).unwrap();
        let (b, hb) = train(&windows, &cfg, &tc).unwrap();
        assert_eq!(a, b);
        let totals_a: Vec<f64> = ha.epochs.iter().map(|e| e.total).collect();
        let totals_b: Vec<f64> = hb.epochs.iter().map(|e| e.total).collect();
        assert_eq!(totals_a, totals_b);
    }

    #[test]
    fn batch_gradient_is_mean_of_window_gradients() {
        let cfg = tiny_config();
        let windows = tiny_windows(5, 2);
        let params = PrismParams::init(&cfg, 3).unwrap();
        let scalers = fit_all_scalers(&windows, cfg.scaler_kind).unwrap();
        let batch: Vec<(&Window, &Scaler)> = windows.iter().zip(&scalers).collect();
        let (_, batched) = batch_gradient(&params, &cfg, &batch).unwrap();

        let mut reference = PrismGrads::zeros(&cfg);
        for (w, s) in &batch {
            let (_, g) = backward(&params, &cfg, w, s).unwrap();
            reference.add_assign(&g).unwrap();
        }
        reference.scale(1.0 / 5.0);

        for (a, b) in batched.to_flat().iter().zip(reference.to_flat()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn partial_final_batch_is_kept() {
        let cfg = tiny_config();
        let windows = tiny_windows(7, 1);
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 5,
            seed: 1,
            shuffle: false,
            ..TrainConfig::default()
        };
        // 7 windows with batch 5 -> batches of 5 and 2; just confirm the
        // run completes and reports a mean over all 7 windows.
        let (_, history) = train(&windows, &cfg, &tc).unwrap();
        assert_eq!(history.epochs.len(), 1);
        assert!(history.epochs[0].total.is_finite());
    }

    #[test]
    fn exploding_run_reports_epoch_and_batch() {
        let cfg = tiny_config();
        let windows = tiny_windows(4, 1);
        let tc = TrainConfig {
            epochs: 5,
            lr: 1e160,
            batch_size: 2,
            seed: 2,
            ..TrainConfig::default()
        };
        match train(&windows, &cfg, &tc) {
            Err(PrismError::Numeric(msg)) => {
                assert!(msg.contains("epoch"), "message: {msg}");
                assert!(msg.contains("batch"), "message: {msg}");
            }
            other => panic!("expected numeric abort, got {other:?}"),
        }
    }

    #[test]
    fn noise_free_single_mode_reaches_the_least_squares_optimum() {
        let spec = MixtureSpec {
            modes: 1,
            mode_weights: vec![1.0],
            history_prototype: vec![
                vec![1.0],
                vec![1.4],
                vec![2.0],
                vec![2.4],
                vec![2.0],
                vec![1.4],
                vec![1.0],
                vec![0.8],
            ],
            mode_futures: vec![vec![
                vec![2.2],
                vec![2.6],
                vec![3.0],
                vec![2.6],
                vec![2.2],
                vec![1.8],
                vec![1.4],
                vec![1.0],
            ]],
            noise_std: 0.0,
            instances: 64,
            seed: 9,
        };
        let windows = generate_mixture(&spec).unwrap().windows;
        let mut config = PrismConfig::new(8, 8, 1).unwrap();
        config.kernel = 3;

        // Least-squares oracle: with one scenario the objective is an
        // ordinary linear least-squares fit, and a zero-weight parameter
        // set whose trend bias equals the scaled target reconstructs the
        // future exactly. The optimum of the objective is therefore 0.
        let scaler = fit_scaler(&windows[0].history, config.scaler_kind).unwrap();
        let target = scaler.apply(&windows[0].future).unwrap();
        let mut optimal = PrismParams::zeros(&config);
        optimal.trend_bias = target.column(0);
        let at_optimum = crate::loss::window_loss(&optimal, &config, &windows[0], &scaler)
            .unwrap();
        assert_eq!(at_optimum.recon, 0.0);
        assert_eq!(at_optimum.prob, 0.0); // single class: cross-entropy 0

        let tc = TrainConfig {
            epochs: 200,
            lr: 1e-3,
            batch_size: 4,
            seed: 17,
            shuffle: true,
            checkpoint_every: 0,
        };
        let (_, history) = train(&windows, &config, &tc).unwrap();
        let recons: Vec<f64> = history.epochs.iter().map(|e| e.recon).collect();
        assert!(
            recons[199] <= 1e-3 * recons[0],
            "final {} vs initial {}",
            recons[199],
            recons[0]
        );
        for e in 5..200 {
            assert!(
                recons[e] <= recons[e - 1],
                "epoch {e}: {} > {}",
                recons[e],
                recons[e - 1]
            );
        }
    }

    #[test]
    fn empty_window_list_is_a_configuration_error() {
        let cfg = tiny_config();
        assert!(matches!(
            train(&[], &cfg, &TrainConfig::default()),
            Err(PrismError::Config(_))
        ));
    }
}
