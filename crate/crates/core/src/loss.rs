//! Training objective: a relaxed winner-takes-all reconstruction term plus
//! a cross-entropy term that teaches the probability map to predict each
//! channel's winner, and exact analytic gradients for both.
//!
//! Losses are computed per channel and averaged, in the scaled space: the
//! caller's scaler is applied to both history and future so channels of
//! different magnitude contribute comparably.

use crate::data::{Scaler, Window};
use crate::decompose::decompose;
use crate::error::{PrismError, Result};
use crate::math::{affine, log_sum_exp, softmax, Matrix};
use crate::model::{PrismConfig, PrismGrads, PrismParams, ScenarioForecast};

/// Loss components for one window. `total` is always exactly
/// `recon + lambda * prob`; `winners[d]` is the scenario with the lowest
/// squared error on channel d.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub recon: f64,
    pub prob: f64,
    pub total: f64,
    pub winners: Vec<usize>,
}

/// First index minimizing `values`; ties go to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Relaxation weight of scenario `n` on a channel whose winner is known.
/// With a single scenario the relaxation is vacuous.
fn scenario_weight(n_scenarios: usize, is_winner: bool, epsilon: f64) -> f64 {
    if n_scenarios == 1 {
        1.0
    } else if is_winner {
        1.0 - epsilon
    } else {
        epsilon / (n_scenarios as f64 - 1.0)
    }
}

/// Index of the scenario (rows of an `[N x T]` matrix) with the smallest
/// sum of squared errors against a length-T ground truth.
pub fn winner_index(scenarios_d: &Matrix, gt_d: &[f64]) -> Result<usize> {
    if scenarios_d.cols() != gt_d.len() || scenarios_d.rows() == 0 {
        return Err(PrismError::Shape(format!(
            "winner_index: {} scenarios of length {}, ground truth of length {}",
            scenarios_d.rows(),
            scenarios_d.cols(),
            gt_d.len()
        )));
    }
    let sse: Vec<f64> = (0..scenarios_d.rows())
        .map(|n| {
            scenarios_d
                .row(n)
                .iter()
                .zip(gt_d)
                .map(|(y, g)| (g - y) * (g - y))
                .sum()
        })
        .collect();
    Ok(argmin(&sse))
}

/// Per-channel scenario errors: `result[d][n]` is the sum of squared
/// errors of scenario n on channel d.
fn sse_by_channel(forecast: &ScenarioForecast, gt: &Matrix) -> Vec<Vec<f64>> {
    (0..gt.cols())
        .map(|d| {
            forecast
                .scenarios
                .iter()
                .map(|scenario| {
                    (0..gt.rows())
                        .map(|t| {
                            let diff = gt.get(t, d) - scenario.get(t, d);
                            diff * diff
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Relaxed winner-takes-all reconstruction loss.
///
/// Per channel the winner's squared error carries weight `1 - epsilon` and
/// every other scenario shares `epsilon` equally; channels are averaged.
/// `gt` must be in the same (scaled) space as the scenarios. Also returns
/// the per-channel winner indices.
pub fn recon_loss(
    forecast: &ScenarioForecast,
    gt: &Matrix,
    epsilon: f64,
) -> Result<(f64, Vec<usize>)> {
    let n = forecast.scenarios.len();
    if n == 0 {
        return Err(PrismError::Shape("forecast has no scenarios".into()));
    }
    let first = &forecast.scenarios[0];
    if first.rows() != gt.rows() || first.cols() != gt.cols() {
        return Err(PrismError::Shape(format!(
            "scenarios are {}x{}, ground truth is {}x{}",
            first.rows(),
            first.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(PrismError::Config(format!("epsilon {epsilon} outside [0, 1)")));
    }

    let channels = gt.cols();
    let mut winners = Vec::with_capacity(channels);
    let mut total = 0.0;
    for channel_sse in sse_by_channel(forecast, gt) {
        let winner = argmin(&channel_sse);
        winners.push(winner);
        let channel_loss: f64 = channel_sse
            .iter()
            .enumerate()
            .map(|(s, &l)| scenario_weight(n, s == winner, epsilon) * l)
            .sum();
        total += channel_loss;
    }
    Ok((total / channels as f64, winners))
}

/// Mean over channels of the cross-entropy between each channel's logits
/// and its winner index, in the numerically stable log-sum-exp form.
pub fn prob_loss(logits: &Matrix, winners: &[usize]) -> Result<f64> {
    if winners.len() != logits.cols() {
        return Err(PrismError::Shape(format!(
            "{} winners for {} logit columns",
            winners.len(),
            logits.cols()
        )));
    }
    let mut total = 0.0;
    for (d, &winner) in winners.iter().enumerate() {
        if winner >= logits.rows() {
            return Err(PrismError::Validation(format!(
                "winner {winner} out of range for {} scenarios",
                logits.rows()
            )));
        }
        let column = logits.column(d);
        total += log_sum_exp(&column) - column[winner];
    }
    Ok(total / logits.cols() as f64)
}

/// Loss of one window without gradients: forward pass in scaled space,
/// reconstruction plus `lambda`-weighted probability term.
pub fn window_loss(
    params: &PrismParams,
    config: &PrismConfig,
    window: &Window,
    scaler: &Scaler,
) -> Result<LossBreakdown> {
    let forecast = crate::model::forward(
        params,
        config,
        &window.history,
        scaler,
        crate::model::OutputSpace::Scaled,
    )?;
    let scaled_gt = scaler.apply(&window.future)?;
    let (recon, winners) = recon_loss(&forecast, &scaled_gt, config.epsilon)?;
    let prob = prob_loss(&forecast.logits, &winners)?;
    Ok(LossBreakdown {
        recon,
        prob,
        total: recon + config.lambda * prob,
        winners,
    })
}

/// Loss and exact analytic gradients of one window with respect to all six
/// parameter blocks.
///
/// Each channel's winner is treated as a constant of the current forward
/// pass (the objective is piecewise smooth in the parameters). The
/// relaxation routes weight `1 - epsilon` through winners and
/// `epsilon / (N - 1)` through every loser; the cross-entropy gradient on
/// a logit column is softmax minus the winner one-hot, averaged over
/// channels and scaled by `lambda`.
pub fn backward(
    params: &PrismParams,
    config: &PrismConfig,
    window: &Window,
    scaler: &Scaler,
) -> Result<(LossBreakdown, PrismGrads)> {
    config.validate()?;
    params.matches_config(config)?;
    if window.history.rows() != config.history_len
        || window.future.rows() != config.horizon
        || window.history.cols() != window.future.cols()
    {
        return Err(PrismError::Shape(format!(
            "window is {}x{} -> {}x{}, config expects {} -> {}",
            window.history.rows(),
            window.history.cols(),
            window.future.rows(),
            window.future.cols(),
            config.history_len,
            config.horizon
        )));
    }

    let channels = window.channels();
    let scaled_x = scaler.apply(&window.history)?;
    let scaled_gt = scaler.apply(&window.future)?;
    let parts = decompose(&scaled_x, config.kernel)?;

    let n = config.scenarios;
    let t_len = config.horizon;
    let (m_count, k_count) = (config.trend_count, config.season_count);
    let inv_d = 1.0 / channels as f64;

    let mut grads = PrismGrads::zeros(config);
    let mut recon_sum = 0.0;
    let mut prob_sum = 0.0;
    let mut winners = Vec::with_capacity(channels);

    let mut trend_out_grad = vec![0.0; m_count * t_len];
    let mut season_out_grad = vec![0.0; k_count * t_len];

    for d in 0..channels {
        let trend_in = parts.trend.column(d);
        let season_in = parts.season.column(d);
        let x = scaled_x.column(d);
        let gt = scaled_gt.column(d);

        let trend_out = affine(&params.trend_weight, &params.trend_bias, &trend_in)?;
        let season_out = affine(&params.season_weight, &params.season_bias, &season_in)?;
        let logits = affine(&params.prob_weight, &params.prob_bias, &x)?;

        // Scenario errors; scenario n = m*K + k sums trend block m and
        // season block k.
        let mut sse = vec![0.0; n];
        for m in 0..m_count {
            for k in 0..k_count {
                let mut acc = 0.0;
                for t in 0..t_len {
                    let y = trend_out[m * t_len + t] + season_out[k * t_len + t];
                    let diff = y - gt[t];
                    acc += diff * diff;
                }
                sse[m * k_count + k] = acc;
            }
        }
        let winner = argmin(&sse);
        winners.push(winner);

        recon_sum += sse
            .iter()
            .enumerate()
            .map(|(s, &l)| scenario_weight(n, s == winner, config.epsilon) * l)
            .sum::<f64>();

        // Gradient through the scenario outputs, accumulated per trend and
        // season block.
        trend_out_grad.iter_mut().for_each(|g| *g = 0.0);
        season_out_grad.iter_mut().for_each(|g| *g = 0.0);
        for m in 0..m_count {
            for k in 0..k_count {
                let idx = m * k_count + k;
                let w = scenario_weight(n, idx == winner, config.epsilon);
                if w == 0.0 {
                    continue;
                }
                let coef = 2.0 * inv_d * w;
                for t in 0..t_len {
                    let y = trend_out[m * t_len + t] + season_out[k * t_len + t];
                    let r = coef * (y - gt[t]);
                    trend_out_grad[m * t_len + t] += r;
                    season_out_grad[k * t_len + t] += r;
                }
            }
        }
        for (i, &g) in trend_out_grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.trend_bias[i] += g;
            for (j, &u) in trend_in.iter().enumerate() {
                grads
                    .trend_weight
                    .set(i, j, grads.trend_weight.get(i, j) + g * u);
            }
        }
        for (i, &g) in season_out_grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.season_bias[i] += g;
            for (j, &s) in season_in.iter().enumerate() {
                grads
                    .season_weight
                    .set(i, j, grads.season_weight.get(i, j) + g * s);
            }
        }

        // Probability term and its gradient on the logits.
        prob_sum += log_sum_exp(&logits) - logits[winner];
        if config.lambda > 0.0 {
            let probs = softmax(&logits)?;
            for (s, &p) in probs.iter().enumerate() {
                let target = if s == winner { 1.0 } else { 0.0 };
                let g = config.lambda * inv_d * (p - target);
                grads.prob_bias[s] += g;
                for (j, &xv) in x.iter().enumerate() {
                    grads
                        .prob_weight
                        .set(s, j, grads.prob_weight.get(s, j) + g * xv);
                }
            }
        }
    }

    let recon = recon_sum / channels as f64;
    let prob = prob_sum / channels as f64;
    let total = recon + config.lambda * prob;
    if !total.is_finite() {
        return Err(PrismError::Numeric(format!("non-finite loss {total}")));
    }
    grads.check_finite().map_err(|e| match e {
        PrismError::Numeric(msg) => PrismError::Numeric(format!("gradient: {msg}")),
        other => other,
    })?;

    Ok((
        LossBreakdown {
            recon,
            prob,
            total,
            winners,
        },
        grads,
    ))
}
