//! The unified evaluation framework: weighted CRPS, joint distortion,
//! weighted-median MAE, weighted-mean MSE, a uniform-probability adapter
//! that lets sample sets from external models share the same metric
//! implementations, and the inference FLOPs estimate.

use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, ScalerKind, Window};
use crate::error::{PrismError, Result};
use crate::math::{weighted_quantile, Matrix};
use crate::model::{forward, OutputSpace, PrismConfig, PrismParams, ScenarioForecast};

/// Where a forecast set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastSource {
    Prism,
    UniformSamples,
}

/// A set of N trajectory scenarios with a per-channel probability column.
/// Both the model's native output and externally sampled trajectory sets
/// (via [`uniform_adapter`]) are evaluated through this one type.
#[derive(Debug, Clone)]
pub struct ForecastSet {
    /// `scenarios[n]` is `[T x D]`.
    pub scenarios: Vec<Matrix>,
    /// `[N x D]`; every column sums to 1.
    pub probabilities: Matrix,
    pub source: ForecastSource,
}

impl From<ScenarioForecast> for ForecastSet {
    fn from(fc: ScenarioForecast) -> Self {
        Self {
            scenarios: fc.scenarios,
            probabilities: fc.probabilities,
            source: ForecastSource::Prism,
        }
    }
}

impl ForecastSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.scenarios.len();
        if n == 0 {
            return Err(PrismError::Validation("forecast set has no scenarios".into()));
        }
        let (t_len, channels) = (self.scenarios[0].rows(), self.scenarios[0].cols());
        if self
            .scenarios
            .iter()
            .any(|s| s.rows() != t_len || s.cols() != channels)
        {
            return Err(PrismError::Shape("scenarios differ in shape".into()));
        }
        if self.probabilities.rows() != n || self.probabilities.cols() != channels {
            return Err(PrismError::Shape(format!(
                "probabilities are {}x{}, expected {}x{}",
                self.probabilities.rows(),
                self.probabilities.cols(),
                n,
                channels
            )));
        }
        for d in 0..channels {
            let mut sum = 0.0;
            for s in 0..n {
                let p = self.probabilities.get(s, d);
                if p < 0.0 {
                    return Err(PrismError::Validation(format!(
                        "negative probability {p} for scenario {s}, channel {d}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(PrismError::Validation(format!(
                    "probability column {d} sums to {sum}, expected 1 within 1e-9"
                )));
            }
        }
        Ok(())
    }

    fn check_gt(&self, gt: &Matrix) -> Result<()> {
        self.validate()?;
        let first = &self.scenarios[0];
        if gt.rows() != first.rows() || gt.cols() != first.cols() {
            return Err(PrismError::Shape(format!(
                "ground truth is {}x{}, scenarios are {}x{}",
                gt.rows(),
                gt.cols(),
                first.rows(),
                first.cols()
            )));
        }
        Ok(())
    }
}

/// Wraps S sampled trajectories as a forecast set with probability `1/S`
/// everywhere, so sampling-based forecasts run through the same metrics.
pub fn uniform_adapter(samples: Vec<Matrix>) -> Result<ForecastSet> {
    if samples.is_empty() {
        return Err(PrismError::Validation("sample set is empty".into()));
    }
    let channels = samples[0].cols();
    let n = samples.len();
    let p = 1.0 / n as f64;
    let probabilities = Matrix::new(n, channels, vec![p; n * channels])?;
    let fs = ForecastSet {
        scenarios: samples,
        probabilities,
        source: ForecastSource::UniformSamples,
    };
    fs.validate()?;
    Ok(fs)
}

/// L1 distance between channel `d` of two `[T x D]` matrices.
fn channel_l1(a: &Matrix, b: &Matrix, d: usize) -> f64 {
    (0..a.rows()).map(|t| (a.get(t, d) - b.get(t, d)).abs()).sum()
}

/// Energy-score CRPS over the weighted scenario set, per channel, averaged
/// over channels:
/// `sum_n p_n |y_n - gt|_1 - 0.5 * sum_n sum_j p_n p_j |y_n - y_j|_1`.
/// The double sum is evaluated exactly.
pub fn weighted_crps(fs: &ForecastSet, gt: &Matrix) -> Result<f64> {
    fs.check_gt(gt)?;
    let n = fs.scenarios.len();
    let channels = gt.cols();
    let mut total = 0.0;
    for d in 0..channels {
        let mut accuracy = 0.0;
        for i in 0..n {
            accuracy += fs.probabilities.get(i, d) * channel_l1(&fs.scenarios[i], gt, d);
        }
        let mut spread = 0.0;
        for i in 0..n {
            for j in 0..n {
                spread += fs.probabilities.get(i, d)
                    * fs.probabilities.get(j, d)
                    * channel_l1(&fs.scenarios[i], &fs.scenarios[j], d);
            }
        }
        total += accuracy - 0.5 * spread;
    }
    Ok(total / channels as f64)
}

/// Minimum RMSE of any scenario against the ground truth, computed jointly
/// over the whole `[T x D]` trajectory. Probabilities are ignored; this
/// measures coverage.
pub fn distortion(fs: &ForecastSet, gt: &Matrix) -> Result<f64> {
    fs.check_gt(gt)?;
    let cells = (gt.rows() * gt.cols()) as f64;
    let best = fs
        .scenarios
        .iter()
        .map(|scenario| {
            let sse: f64 = scenario
                .as_slice()
                .iter()
                .zip(gt.as_slice())
                .map(|(y, g)| (y - g) * (y - g))
                .sum();
            (sse / cells).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// MAE of the median forecast: per channel and time step the weighted
/// 0.5-quantile of the scenario values (lower rule), then the mean
/// absolute error averaged over time and channels.
pub fn point_mae(fs: &ForecastSet, gt: &Matrix) -> Result<f64> {
    fs.check_gt(gt)?;
    let n = fs.scenarios.len();
    let (t_len, channels) = (gt.rows(), gt.cols());
    let mut total = 0.0;
    for d in 0..channels {
        let weights = fs.probabilities.column(d);
        let mut channel_err = 0.0;
        for t in 0..t_len {
            let values: Vec<f64> = (0..n).map(|s| fs.scenarios[s].get(t, d)).collect();
            let median = weighted_quantile(&values, &weights, 0.5)?;
            channel_err += (gt.get(t, d) - median).abs();
        }
        total += channel_err / t_len as f64;
    }
    Ok(total / channels as f64)
}

/// MSE of the mean forecast: per channel the probability-weighted average
/// scenario, then the mean squared error averaged over time and channels.
pub fn point_mse(fs: &ForecastSet, gt: &Matrix) -> Result<f64> {
    fs.check_gt(gt)?;
    let n = fs.scenarios.len();
    let (t_len, channels) = (gt.rows(), gt.cols());
    let mut total = 0.0;
    for d in 0..channels {
        let mut channel_err = 0.0;
        for t in 0..t_len {
            let mean: f64 = (0..n)
                .map(|s| fs.probabilities.get(s, d) * fs.scenarios[s].get(t, d))
                .sum();
            let diff = gt.get(t, d) - mean;
            channel_err += diff * diff;
        }
        total += channel_err / t_len as f64;
    }
    Ok(total / channels as f64)
}

/// Multiply-accumulate count of the three affine maps for one forward
/// pass: `batch * D * L * (M*T + K*T + N)`. Bias additions and the
/// decomposition's pooling are excluded from the count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub trend: u64,
    pub season: u64,
    pub probability: u64,
    pub total: u64,
}

pub fn flops_breakdown(config: &PrismConfig, channels: usize, batch: usize) -> FlopsBreakdown {
    let per_input = (batch * channels * config.history_len) as u64;
    let trend = per_input * (config.trend_count * config.horizon) as u64;
    let season = per_input * (config.season_count * config.horizon) as u64;
    let probability = per_input * config.scenarios as u64;
    FlopsBreakdown {
        trend,
        season,
        probability,
        total: trend + season + probability,
    }
}

pub fn flops_estimate(config: &PrismConfig, channels: usize, batch: usize) -> u64 {
    flops_breakdown(config, channels, batch).total
}

/// Aggregated evaluation over a window split. All four error metrics are
/// means over windows, computed in the per-window scaled space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub crps: f64,
    pub distortion: f64,
    pub mae: f64,
    pub mse: f64,
    pub window_count: usize,
    pub flops_per_forward: u64,
}

/// Runs the model over every window and averages the four metrics. Each
/// window gets its own scaler (fit on the history only); the ground truth
/// future is scaled with the same transform, so all metrics live in the
/// normalized space.
pub fn evaluate(
    params: &PrismParams,
    config: &PrismConfig,
    scaler_kind: ScalerKind,
    windows: &[Window],
) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(PrismError::Config("cannot evaluate on zero windows".into()));
    }
    let channels = windows[0].channels();
    let mut crps_sum = 0.0;
    let mut distortion_sum = 0.0;
    let mut mae_sum = 0.0;
    let mut mse_sum = 0.0;
    for window in windows {
        let scaler = fit_scaler(&window.history, scaler_kind)?;
        let fs: ForecastSet =
            forward(params, config, &window.history, &scaler, OutputSpace::Scaled)?.into();
        let gt = scaler.apply(&window.future)?;
        crps_sum += weighted_crps(&fs, &gt)?;
        distortion_sum += distortion(&fs, &gt)?;
        mae_sum += point_mae(&fs, &gt)?;
        mse_sum += point_mse(&fs, &gt)?;
    }
    let count = windows.len() as f64;
    let report = MetricsReport {
        crps: crps_sum / count,
        distortion: distortion_sum / count,
        mae: mae_sum / count,
        mse: mse_sum / count,
        window_count: windows.len(),
        flops_per_forward: flops_estimate(config, channels, 1),
    };
    if !(report.crps.is_finite()
        && report.distortion.is_finite()
        && report.mae.is_finite()
        && report.mse.is_finite())
    {
        return Err(PrismError::Numeric(format!(
            "non-finite metric in report: {report:?}"
        )));
    }
    Ok(report)
}

/// Writes the per-window scenario export: one CSV row per
/// (scenario, channel) pair holding the scenario index, channel name,
/// probability and the T trajectory values. `order` controls row order
/// (callers typically sort by descending channel-0 probability).
pub fn write_forecast_csv<W: std::io::Write>(
    mut out: W,
    fs: &ForecastSet,
    channel_names: &[String],
    order: &[usize],
) -> Result<()> {
    fs.validate()?;
    let (t_len, channels) = (fs.scenarios[0].rows(), fs.scenarios[0].cols());
    if channel_names.len() != channels {
        return Err(PrismError::Shape(format!(
            "{} channel names for {channels} channels",
            channel_names.len()
        )));
    }
    let header: Vec<String> = ["scenario", "channel", "probability"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..t_len).map(|t| format!("t{t}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for &n in order {
        for (d, name) in channel_names.iter().enumerate() {
            let mut fields = vec![
                n.to_string(),
                name.clone(),
                fs.probabilities.get(n, d).to_string(),
            ];
            fields.extend((0..t_len).map(|t| fs.scenarios[n].get(t, d).to_string()));
            writeln!(out, "{}", fields.join(","))?;
        }
    }
    Ok(())
}
