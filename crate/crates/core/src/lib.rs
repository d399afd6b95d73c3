//! Scenario-probability forecasting in one forward pass.
//!
//! A small linear model maps an `[L x D]` history to N = M * K future
//! trajectories ("scenarios") with an explicit per-channel probability for
//! each, instead of approximating the predictive distribution by sampling.
//! The crate bundles:
//!
//! - [`math`] / [`optim`]: the dense numerics everything is built on,
//! - [`data`] / [`synth`]: CSV ingestion, window cutting, per-channel
//!   scalers, and a seeded multimodal generator with known ground truth,
//! - [`decompose`]: moving-average trend/season split,
//! - [`model`]: the three shared affine maps and the combinatorial
//!   scenario set,
//! - [`loss`]: relaxed winner-takes-all training objective with exact
//!   analytic gradients,
//! - [`trainer`]: the deterministic mini-batch Adam loop,
//! - [`metrics`]: weighted CRPS, distortion, weighted-median MAE,
//!   weighted-mean MSE, FLOPs accounting, and the uniform-probability
//!   adapter for externally sampled forecasts.

pub mod data;
pub mod decompose;
pub mod error;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod seeds;
pub mod synth;
pub mod trainer;

pub use data::{
    fit_scaler, load_csv, make_windows, CsvLayout, Scaler, ScalerKind, SeriesFrame, Window,
};
pub use decompose::{decompose, Decomposition};
pub use error::{PrismError, Result};
pub use loss::{backward, prob_loss, recon_loss, window_loss, winner_index, LossBreakdown};
pub use math::{affine, softmax, weighted_quantile, Matrix};
pub use metrics::{
    distortion, evaluate, flops_breakdown, flops_estimate, point_mae, point_mse, uniform_adapter,
    weighted_crps, ForecastSet, ForecastSource, MetricsReport,
};
pub use model::{
    combine_scenarios, factorize_n, forward, Checkpoint, OutputSpace, PrismConfig, PrismGrads,
    PrismParams, ScenarioForecast,
};
pub use optim::AdamState;
pub use synth::{generate_mixture, MixtureData, MixtureSpec};
pub use trainer::{train, train_with_validation, TrainConfig, TrainHistory};
