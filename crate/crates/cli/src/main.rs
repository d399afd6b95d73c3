//! `timeprism` — train, evaluate and export scenario-probability
//! forecasts from the command line.
//!
//! Exit codes: 0 on success, 2 for usage/configuration/data errors, 3 for
//! numeric failures (non-finite losses or outputs).

mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{
    cmd_eval_adapter, cmd_eval_model, cmd_flops, cmd_forecast, cmd_synth, cmd_train, FlopsPreset,
    SplitName,
};
use config::RunConfig;
use timeprism_core::error::{PrismError, Result};
use timeprism_core::model::PrismConfig;

#[derive(Parser)]
#[command(name = "timeprism", version, about = "Scenario-probability forecasting runs")]
struct Cli {
    /// Force single-threaded deterministic reductions. Execution is
    /// single-threaded in this build, so runs are deterministic with or
    /// without the flag; it is accepted everywhere for interface
    /// stability.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset from a mixture spec.
    Synth {
        /// Mixture spec JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for windows.csv and modes.csv.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model as described by a run config.
    Train {
        /// Run config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a data split, or an external sample set
    /// via the uniform-probability adapter.
    Eval {
        /// Trained checkpoint JSON (model mode).
        #[arg(long, required_unless_present = "adapter")]
        checkpoint: Option<PathBuf>,
        /// Data source path (series CSV, windows CSV, or mixture spec;
        /// kind is sniffed from the content). Defaults to the config's
        /// data source.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Which split to score.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Run config JSON providing split fractions/stride (and the data
        /// source when --data is omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// External sample CSV (adapter mode).
        #[arg(long, requires = "truth", conflicts_with_all = ["checkpoint", "data", "config"])]
        adapter: Option<PathBuf>,
        /// Ground-truth trajectory CSV (wide layout) for adapter mode.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output directory for report.json.
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
    },
    /// Forecast from a history CSV and export the scenario set.
    Forecast {
        /// Trained checkpoint JSON.
        #[arg(long)]
        checkpoint: PathBuf,
        /// History CSV (wide layout, exactly history_len rows).
        #[arg(long)]
        history: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the inference FLOPs estimate for a configuration.
    Flops(FlopsArgs),
}

#[derive(Args)]
struct FlopsArgs {
    /// Named dataset-scale preset.
    #[arg(long, value_enum)]
    preset: Option<FlopsPreset>,
    /// Run config JSON to take model dimensions from.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "preset")]
    history_len: Option<usize>,
    #[arg(long, conflicts_with = "preset")]
    horizon: Option<usize>,
    #[arg(long, conflicts_with = "preset")]
    scenarios: Option<usize>,
    /// Channel count D.
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Eval {
            checkpoint,
            data,
            split,
            config,
            adapter,
            truth,
            out,
        } => {
            if let Some(samples) = adapter {
                let truth = truth.ok_or_else(|| {
                    PrismError::Config("--adapter requires --truth".into())
                })?;
                return cmd_eval_adapter(&samples, &truth, &out);
            }
            let checkpoint = checkpoint
                .ok_or_else(|| PrismError::Config("--checkpoint is required".into()))?;
            let run_config = match &config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            let source = match data {
                Some(path) => sniff_data_source(&path)?,
                None => run_config.require_data()?.clone(),
            };
            cmd_eval_model(
                &checkpoint,
                &source,
                split,
                &run_config.split,
                run_config.stride,
                &out,
            )
        }
        Command::Forecast {
            checkpoint,
            history,
            out,
        } => cmd_forecast(&checkpoint, &history, &out),
        Command::Flops(args) => {
            let (config, channels) = resolve_flops_config(&args)?;
            cmd_flops(&config, channels, args.batch)
        }
    }
}

/// Decides whether a path is a windows CSV, a mixture spec, or a wide
/// series CSV by looking at its first bytes.
fn sniff_data_source(path: &PathBuf) -> Result<config::DataSource> {
    let text = std::fs::read_to_string(path)?;
    let head = text.trim_start();
    if head.starts_with('{') {
        Ok(config::DataSource::Mixture(path.clone()))
    } else if head.starts_with("window,step,role") {
        Ok(config::DataSource::Windows(path.clone()))
    } else {
        Ok(config::DataSource::Series(path.clone()))
    }
}

fn resolve_flops_config(args: &FlopsArgs) -> Result<(PrismConfig, usize)> {
    if let Some(preset) = args.preset {
        let (l, t, n, d) = preset.dims();
        let config = PrismConfig::new(l, t, n)?;
        return Ok((config, args.channels.unwrap_or(d)));
    }
    if let Some(path) = &args.config {
        let run = RunConfig::load(path)?;
        let config = run.model.to_prism_config()?;
        let channels = args.channels.ok_or_else(|| {
            PrismError::Config("--channels is required with --config".into())
        })?;
        return Ok((config, channels));
    }
    let (history_len, horizon, scenarios, channels) = match (
        args.history_len,
        args.horizon,
        args.scenarios,
        args.channels,
    ) {
        (Some(l), Some(t), Some(n), Some(d)) => (l, t, n, d),
        _ => {
            return Err(PrismError::Config(
                "flops needs --preset, --config, or all of --history-len --horizon --scenarios --channels"
                    .into(),
            ))
        }
    };
    Ok((PrismConfig::new(history_len, horizon, scenarios)?, channels))
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (e.g. `timeprism ... | head`) instead
    // of panicking on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PrismError::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
