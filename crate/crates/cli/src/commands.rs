//! The five subcommands behind the CLI surface.

use std::io::Write;
use std::path::{Path, PathBuf};

use timeprism_core::data::{load_csv, make_windows, CsvLayout, Window};
use timeprism_core::error::{PrismError, Result};
use timeprism_core::metrics::{
    distortion, evaluate, flops_breakdown, point_mae, point_mse, uniform_adapter,
    weighted_crps, write_forecast_csv, ForecastSet, MetricsReport,
};
use timeprism_core::model::{forward, Checkpoint, OutputSpace, PrismConfig};
use timeprism_core::synth::{generate_mixture, MixtureSpec};
use timeprism_core::trainer::train_with_validation;
use timeprism_core::{fit_scaler, Scaler};

use crate::config::{DataSource, RunConfig, SplitSection};
use crate::files::{read_samples_csv, read_windows_csv, write_modes_csv, write_windows_csv};

/// Which chronological split a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

/// The three window splits of a data source.
pub struct SplitWindows {
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub channel_names: Vec<String>,
}

impl SplitWindows {
    pub fn select(&self, split: SplitName) -> &[Window] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Loads a data source and cuts it into train/val/test windows.
///
/// Series data is split chronologically into contiguous regions before
/// windowing; window files and generated mixtures are split by instance
/// order with the same fractions.
pub fn load_split_windows(
    source: &DataSource,
    config: &PrismConfig,
    split: &SplitSection,
    stride: usize,
) -> Result<SplitWindows> {
    split.validate()?;
    match source {
        DataSource::Series(path) => {
            let frame = load_csv(path, CsvLayout::Wide)?;
            let (train_region, val_region, test_region) = split.regions(frame.len());
            let cut = |region: std::ops::Range<usize>| -> Result<Vec<Window>> {
                if region.end - region.start < config.history_len + config.horizon {
                    return Ok(Vec::new());
                }
                make_windows(&frame, config.history_len, config.horizon, stride, region)
            };
            Ok(SplitWindows {
                train: cut(train_region)?,
                val: cut(val_region)?,
                test: cut(test_region)?,
                channel_names: frame.channel_names,
            })
        }
        DataSource::Windows(path) => {
            let (windows, channel_names) = read_windows_csv(path)?;
            let (train, val, test) = split_instances(windows, split);
            Ok(SplitWindows {
                train,
                val,
                test,
                channel_names,
            })
        }
        DataSource::Mixture(path) => {
            let spec = read_mixture_spec(path)?;
            let data = generate_mixture(&spec)?;
            let channel_names = (0..spec.channels()).map(|d| format!("ch{d}")).collect();
            let (train, val, test) = split_instances(data.windows, split);
            Ok(SplitWindows {
                train,
                val,
                test,
                channel_names,
            })
        }
    }
}

fn split_instances(
    windows: Vec<Window>,
    split: &SplitSection,
) -> (Vec<Window>, Vec<Window>, Vec<Window>) {
    let n = windows.len();
    let t1 = ((n as f64) * split.train).floor() as usize;
    let t2 = ((n as f64) * (split.train + split.val)).floor() as usize;
    let t1 = t1.min(n);
    let t2 = t2.clamp(t1, n);
    let mut windows = windows;
    let test = windows.split_off(t2);
    let val = windows.split_off(t1);
    (windows, val, test)
}

pub fn read_mixture_spec(path: &Path) -> Result<MixtureSpec> {
    let text = std::fs::read_to_string(path)?;
    let spec: MixtureSpec = serde_json::from_str(&text)
        .map_err(|e| PrismError::Validation(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

/// `synth`: materialize a mixture spec as windows.csv + modes.csv.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut spec = read_mixture_spec(spec_path)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let data = generate_mixture(&spec)?;
    std::fs::create_dir_all(out_dir)?;
    let channel_names: Vec<String> = (0..spec.channels()).map(|d| format!("ch{d}")).collect();
    let windows_path = out_dir.join("windows.csv");
    let modes_path = out_dir.join("modes.csv");
    write_windows_csv(&windows_path, &data.windows, &channel_names)?;
    write_modes_csv(&modes_path, &data.mode_assignment)?;
    println!(
        "synth: {} windows ({} history + {} future rows each, channels={}) -> {}",
        data.windows.len(),
        spec.history_len(),
        spec.horizon(),
        spec.channels(),
        windows_path.display()
    );
    println!("synth: mode assignment -> {}", modes_path.display());
    Ok(())
}

/// `train`: train from a run config, writing checkpoint, per-epoch log
/// and the fully resolved config for provenance.
pub fn cmd_train(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<()> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }
    if let Some(out) = out_override {
        run.out_dir = out;
    }
    let model_config = run.model.to_prism_config()?;
    let source = run.require_data()?;
    let splits = load_split_windows(source, &model_config, &run.split, run.stride)?;
    if splits.train.is_empty() {
        return Err(PrismError::Config(
            "the training split produced no windows".into(),
        ));
    }
    let tc = run.train.to_train_config(run.seed);
    let validation = (!splits.val.is_empty()).then_some(splits.val.as_slice());
    let (params, history) = train_with_validation(&splits.train, validation, &model_config, &tc)?;

    std::fs::create_dir_all(&run.out_dir)?;
    let checkpoint_path = run.out_dir.join("checkpoint.json");
    Checkpoint::new(model_config, params).save(&checkpoint_path)?;

    let log_path = run.out_dir.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    for record in &history.epochs {
        writeln!(log, "{}", serde_json::to_string(record)?)?;
    }
    log.flush()?;

    let resolved_path = run.out_dir.join("resolved_config.json");
    std::fs::write(&resolved_path, serde_json::to_string_pretty(&run)?)?;

    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "train: {} epochs on {} windows (channels={}); final total={} recon={} prob={}",
        last.epoch,
        splits.train.len(),
        splits.channel_names.len(),
        last.total,
        last.recon,
        last.prob
    );
    println!("train: checkpoint -> {}", checkpoint_path.display());
    println!("train: log -> {}", log_path.display());
    println!("train: resolved config -> {}", resolved_path.display());
    Ok(())
}

fn write_report(report: &MetricsReport, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}

fn print_report(report: &MetricsReport) {
    println!(
        "crps={} distortion={} mae={} mse={}",
        report.crps, report.distortion, report.mae, report.mse
    );
    println!(
        "windows={} flops_per_forward={}",
        report.window_count, report.flops_per_forward
    );
}

/// `eval` against a trained checkpoint.
pub fn cmd_eval_model(
    checkpoint_path: &Path,
    data: &DataSource,
    split_name: SplitName,
    split: &SplitSection,
    stride: usize,
    out_dir: &Path,
) -> Result<()> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let splits = load_split_windows(data, &checkpoint.config, split, stride)?;
    let windows = splits.select(split_name);
    if windows.is_empty() {
        return Err(PrismError::Config(format!(
            "the {split_name:?} split has no windows of shape {} -> {}",
            checkpoint.config.history_len, checkpoint.config.horizon
        )));
    }
    let report = evaluate(
        &checkpoint.params,
        &checkpoint.config,
        checkpoint.config.scaler_kind,
        windows,
    )?;
    let path = write_report(&report, out_dir)?;
    print_report(&report);
    println!("eval: report -> {}", path.display());
    Ok(())
}

/// `eval --adapter`: score an external sample set (uniform probabilities)
/// against one ground-truth trajectory. Inputs are taken as-is; no scaler
/// is fit.
pub fn cmd_eval_adapter(samples_path: &Path, truth_path: &Path, out_dir: &Path) -> Result<()> {
    let (samples, _) = read_samples_csv(samples_path)?;
    let truth = load_csv(truth_path, CsvLayout::Wide)?;
    let gt = truth.values;
    let fs = uniform_adapter(samples)?;
    let report = MetricsReport {
        crps: weighted_crps(&fs, &gt)?,
        distortion: distortion(&fs, &gt)?,
        mae: point_mae(&fs, &gt)?,
        mse: point_mse(&fs, &gt)?,
        window_count: 1,
        flops_per_forward: 0,
    };
    let path = write_report(&report, out_dir)?;
    print_report(&report);
    println!("eval: report -> {}", path.display());
    Ok(())
}

/// `forecast`: run one forward pass on a history CSV and export the
/// scenario set in original units, ordered by descending channel-0
/// probability.
pub fn cmd_forecast(checkpoint_path: &Path, history_path: &Path, out_file: &Path) -> Result<()> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let frame = load_csv(history_path, CsvLayout::Wide)?;
    if frame.len() != checkpoint.config.history_len {
        return Err(PrismError::Shape(format!(
            "history has {} rows, checkpoint expects {}",
            frame.len(),
            checkpoint.config.history_len
        )));
    }
    let scaler: Scaler = fit_scaler(&frame.values, checkpoint.config.scaler_kind)?;
    let fs: ForecastSet = forward(
        &checkpoint.params,
        &checkpoint.config,
        &frame.values,
        &scaler,
        OutputSpace::Original,
    )?
    .into();

    let mut order: Vec<usize> = (0..checkpoint.config.scenarios).collect();
    order.sort_by(|&a, &b| {
        fs.probabilities
            .get(b, 0)
            .partial_cmp(&fs.probabilities.get(a, 0))
            .expect("finite probabilities")
            .then(a.cmp(&b))
    });

    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let out = std::io::BufWriter::new(std::fs::File::create(out_file)?);
    write_forecast_csv(out, &fs, &frame.channel_names, &order)?;
    println!(
        "forecast: {} scenarios x {} channels -> {}",
        checkpoint.config.scenarios,
        frame.channel_names.len(),
        out_file.display()
    );
    Ok(())
}

/// Named dataset-scale presets for the FLOPs estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FlopsPreset {
    Electricity,
    Exchange,
    Solar,
    Traffic,
    Wikipedia,
}

impl FlopsPreset {
    /// (history_len, horizon, scenarios, channels)
    pub fn dims(self) -> (usize, usize, usize, usize) {
        match self {
            FlopsPreset::Electricity => (24, 24, 625, 370),
            FlopsPreset::Exchange => (30, 30, 625, 8),
            FlopsPreset::Solar => (24, 24, 625, 137),
            FlopsPreset::Traffic => (24, 24, 625, 963),
            FlopsPreset::Wikipedia => (30, 30, 625, 2000),
        }
    }
}

/// `flops`: print the multiply-accumulate count and its per-layer terms.
pub fn cmd_flops(config: &PrismConfig, channels: usize, batch: usize) -> Result<()> {
    config.validate()?;
    if channels == 0 || batch == 0 {
        return Err(PrismError::Config(
            "channels and batch must be positive".into(),
        ));
    }
    let b = flops_breakdown(config, channels, batch);
    println!(
        "config: L={} T={} N={} (M={} K={}) D={channels} batch={batch}",
        config.history_len,
        config.horizon,
        config.scenarios,
        config.trend_count,
        config.season_count
    );
    println!("trend: {}", b.trend);
    println!("season: {}", b.season);
    println!("probability: {}", b.probability);
    println!("flops: {}", b.total);
    Ok(())
}
