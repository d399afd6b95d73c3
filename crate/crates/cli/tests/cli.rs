//! End-to-end checks of the `timeprism` binary: exit codes, file
//! contracts, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use timeprism_core::math::Matrix;
use timeprism_core::metrics::{uniform_adapter, weighted_crps, MetricsReport};
use timeprism_core::model::{Checkpoint, PrismConfig, PrismParams};
use timeprism_core::seeds::derive_seed;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_timeprism"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_code(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        format!(
            "{}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Two-mode mixture over a 6-step horizon, one channel.
fn mixture_spec(instances: usize, seed: u64) -> serde_json::Value {
    json!({
        "modes": 2,
        "mode_weights": [0.6, 0.4],
        "history_prototype": [[1.0], [1.3], [1.8], [2.1], [1.7], [1.2]],
        "mode_futures": [
            [[2.5], [2.5], [2.5], [2.5], [2.5], [2.5]],
            [[-0.5], [-0.5], [-0.5], [-0.5], [-0.5], [-0.5]]
        ],
        "noise_std": 0.05,
        "instances": instances,
        "seed": seed
    })
}

fn run_config(windows_csv: &Path, out_dir: &Path, epochs: usize, lr: f64) -> serde_json::Value {
    json!({
        "data": {"windows": windows_csv.to_str().unwrap()},
        "model": {"horizon": 6, "scenarios": 4, "kernel": 3},
        "train": {"epochs": epochs, "lr": lr, "batch_size": 16},
        "seed": 11,
        "out_dir": out_dir.to_str().unwrap()
    })
}

fn synth_into(dir: &Path, instances: usize) -> PathBuf {
    let spec_path = dir.join("spec.json");
    write_json(&spec_path, &mixture_spec(instances, 5));
    run_ok(&[
        "synth",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    dir.join("windows.csv")
}

#[test]
fn synth_writes_expected_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let windows_csv = synth_into(dir.path(), 20);
    let text = std::fs::read_to_string(&windows_csv).unwrap();
    // header + 20 windows x (6 history + 6 future)
    assert_eq!(text.lines().count(), 1 + 20 * 12);
    let modes = std::fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    assert_eq!(modes.lines().count(), 1 + 20);
}

#[test]
fn synth_rejects_bad_weights_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    let mut spec = mixture_spec(5, 1);
    spec["mode_weights"] = json!([0.6, 0.3]);
    write_json(&spec_path, &spec);
    let (code, output) = run_code(&[
        "synth",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(output.contains("mode_weights"), "output: {output}");
}

#[test]
fn synth_is_byte_identical_for_the_same_seed() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = synth_into(dir_a.path(), 15);
    let b = synth_into(dir_b.path(), 15);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(
        std::fs::read(dir_a.path().join("modes.csv")).unwrap(),
        std::fs::read(dir_b.path().join("modes.csv")).unwrap()
    );

    // overriding the seed changes the data
    let dir_c = tempfile::tempdir().unwrap();
    let spec_path = dir_c.path().join("spec.json");
    write_json(&spec_path, &mixture_spec(15, 5));
    run_ok(&[
        "synth",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        dir_c.path().to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_ne!(
        std::fs::read(dir_c.path().join("windows.csv")).unwrap(),
        std::fs::read(dir_a.path().join("windows.csv")).unwrap()
    );
}

#[test]
fn train_writes_checkpoint_log_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let windows_csv = synth_into(dir.path(), 40);
    let out = dir.path().join("run");
    let config_path = dir.path().join("run.json");
    write_json(&config_path, &run_config(&windows_csv, &out, 7, 1e-3));

    run_ok(&["train", "--config", config_path.to_str().unwrap()]);

    let checkpoint = Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    assert_eq!(checkpoint.config.scenarios, 4);
    let log = std::fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 7);
    for line in log.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["total"].as_f64().unwrap().is_finite());
    }
    assert!(out.join("resolved_config.json").exists());
}

#[test]
fn zero_learning_rate_checkpoint_equals_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let windows_csv = synth_into(dir.path(), 30);
    let out = dir.path().join("run");
    let config_path = dir.path().join("run.json");
    write_json(&config_path, &run_config(&windows_csv, &out, 3, 0.0));

    run_ok(&["train", "--config", config_path.to_str().unwrap()]);

    let checkpoint = Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    let expected = PrismParams::init(&checkpoint.config, derive_seed(11, "init")).unwrap();
    assert_eq!(checkpoint.params, expected);
}

#[test]
fn identical_runs_produce_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let windows_csv = synth_into(dir.path(), 40);
    let config_path = dir.path().join("run.json");
    write_json(
        &config_path,
        &run_config(&windows_csv, &dir.path().join("unused"), 5, 1e-3),
    );

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--deterministic",
        ]);
    }
    assert_eq!(
        std::fs::read(out_a.join("checkpoint.json")).unwrap(),
        std::fs::read(out_b.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let windows_csv = synth_into(dir.path(), 30);
    let out_a = dir.path().join("a");
    let config_path = dir.path().join("run.json");
    write_json(&config_path, &run_config(&windows_csv, &out_a, 4, 1e-3));
    run_ok(&["train", "--config", config_path.to_str().unwrap()]);

    let out_b = dir.path().join("b");
    run_ok(&[
        "train",
        "--config",
        out_a.join("resolved_config.json").to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(out_a.join("checkpoint.json")).unwrap(),
        std::fs::read(out_b.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn eval_reports_finite_metrics_with_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let windows_csv = synth_into(dir.path(), 40);
    let out = dir.path().join("run");
    let config_path = dir.path().join("run.json");
    write_json(&config_path, &run_config(&windows_csv, &out, 6, 1e-3));
    run_ok(&["train", "--config", config_path.to_str().unwrap()]);

    let eval_out = dir.path().join("eval");
    let output = run_ok(&[
        "eval",
        "--checkpoint",
        out.join("checkpoint.json").to_str().unwrap(),
        "--data",
        windows_csv.to_str().unwrap(),
        "--split",
        "test",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("crps="), "stdout: {stdout}");

    let text = std::fs::read_to_string(eval_out.join("report.json")).unwrap();
    let report: MetricsReport = serde_json::from_str(&text).unwrap();
    assert!(report.crps.is_finite() && report.crps >= 0.0);
    assert!(report.distortion.is_finite());
    assert!(report.window_count > 0);
    // strict schema: exactly the documented fields (Value sorts keys)
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        vec!["crps", "distortion", "flops_per_forward", "mae", "mse", "window_count"]
    );

    // identical rerun writes identical bytes
    run_ok(&[
        "eval",
        "--checkpoint",
        out.join("checkpoint.json").to_str().unwrap(),
        "--data",
        windows_csv.to_str().unwrap(),
        "--split",
        "test",
        "--out",
        dir.path().join("eval2").to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(eval_out.join("report.json")).unwrap(),
        std::fs::read(dir.path().join("eval2").join("report.json")).unwrap()
    );
}

#[test]
fn eval_adapter_matches_library_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    let (s, t_len, channels) = (7, 4, 2);
    let samples: Vec<Matrix> = (0..s)
        .map(|_| {
            let data = (0..t_len * channels).map(|_| rng.random_range(-3.0..3.0)).collect();
            Matrix::new(t_len, channels, data).unwrap()
        })
        .collect();
    let truth_values: Vec<Vec<f64>> = (0..t_len)
        .map(|_| (0..channels).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();

    let samples_path = dir.path().join("samples.csv");
    let mut text = String::from("sample,step,a,b\n");
    for (i, sample) in samples.iter().enumerate() {
        for t in 0..t_len {
            text.push_str(&format!(
                "{i},{t},{},{}\n",
                sample.get(t, 0),
                sample.get(t, 1)
            ));
        }
    }
    std::fs::write(&samples_path, text).unwrap();

    let truth_path = dir.path().join("truth.csv");
    let mut text = String::from("a,b\n");
    for row in &truth_values {
        text.push_str(&format!("{},{}\n", row[0], row[1]));
    }
    std::fs::write(&truth_path, text).unwrap();

    let eval_out = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--adapter",
        samples_path.to_str().unwrap(),
        "--truth",
        truth_path.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);

    let report: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("report.json")).unwrap())
            .unwrap();
    let gt = Matrix::from_rows(&truth_values).unwrap();
    let fs = uniform_adapter(samples).unwrap();
    let expected = weighted_crps(&fs, &gt).unwrap();
    assert!((report.crps - expected).abs() < 1e-12);
}

#[test]
fn forecast_export_contract() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PrismConfig::new(6, 6, 4).unwrap();
    cfg.kernel = 3;
    let params = PrismParams::init(&cfg, 77).unwrap();
    let checkpoint_path = dir.path().join("ck.json");
    Checkpoint::new(cfg.clone(), params).save(&checkpoint_path).unwrap();

    let history_path = dir.path().join("history.csv");
    std::fs::write(
        &history_path,
        "x,y\n1.0,5.0\n1.2,5.5\n1.4,6.0\n1.6,6.5\n1.8,7.0\n2.0,7.5\n",
    )
    .unwrap();

    let out_file = dir.path().join("forecast.csv");
    run_ok(&[
        "forecast",
        "--checkpoint",
        checkpoint_path.to_str().unwrap(),
        "--history",
        history_path.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]);

    let text = std::fs::read_to_string(&out_file).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 4 * 2); // header + N*D rows

    // probabilities per channel sum to 1 after the text round-trip, and
    // channel-0 probabilities arrive in descending order
    let mut sums = [0.0f64; 2];
    let mut last_p0 = f64::INFINITY;
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let p: f64 = fields[2].parse().unwrap();
        match fields[1] {
            "x" => {
                sums[0] += p;
                assert!(p <= last_p0 + 1e-15);
                last_p0 = p;
            }
            "y" => sums[1] += p,
            other => panic!("unexpected channel {other}"),
        }
    }
    assert!((sums[0] - 1.0).abs() < 1e-6);
    assert!((sums[1] - 1.0).abs() < 1e-6);
}

#[test]
fn forecast_zero_checkpoint_emits_inverse_scaled_zeros() {
    use timeprism_core::data::ScalerKind;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PrismConfig::new(4, 4, 2).unwrap();
    cfg.kernel = 3;
    cfg.scaler_kind = ScalerKind::MeanStd;
    let checkpoint_path = dir.path().join("ck.json");
    Checkpoint::new(cfg.clone(), PrismParams::zeros(&cfg))
        .save(&checkpoint_path)
        .unwrap();

    let history_path = dir.path().join("history.csv");
    std::fs::write(&history_path, "v\n2.0\n4.0\n6.0\n8.0\n").unwrap();

    let out_file = dir.path().join("forecast.csv");
    run_ok(&[
        "forecast",
        "--checkpoint",
        checkpoint_path.to_str().unwrap(),
        "--history",
        history_path.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]);

    // zero scaled scenarios invert to the scaler location: the history
    // mean, 5.0
    let text = std::fs::read_to_string(&out_file).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        for value in &fields[3..] {
            assert_eq!(value.parse::<f64>().unwrap(), 5.0);
        }
    }
}

#[test]
fn forecast_rejects_wrong_history_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PrismConfig::new(6, 6, 4).unwrap();
    let checkpoint_path = dir.path().join("ck.json");
    Checkpoint::new(cfg.clone(), PrismParams::zeros(&cfg))
        .save(&checkpoint_path)
        .unwrap();
    let history_path = dir.path().join("history.csv");
    std::fs::write(&history_path, "v\n1.0\n2.0\n").unwrap();
    let (code, output) = run_code(&[
        "forecast",
        "--checkpoint",
        checkpoint_path.to_str().unwrap(),
        "--history",
        history_path.to_str().unwrap(),
        "--out",
        dir.path().join("f.csv").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(output.contains("history"), "output: {output}");
}

#[test]
fn flops_command_prints_known_totals() {
    let out = run_ok(&["flops", "--preset", "exchange"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("flops: 510000"), "stdout: {stdout}");

    let out = run_ok(&["flops", "--preset", "solar"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("flops: 6000600"), "stdout: {stdout}");

    let out = run_ok(&[
        "flops",
        "--history-len",
        "1",
        "--horizon",
        "1",
        "--scenarios",
        "1",
        "--channels",
        "1",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("flops: 3"), "stdout: {stdout}");
}

#[test]
fn missing_data_exits_2_and_diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    write_json(
        &config_path,
        &json!({
            "data": {"windows": dir.path().join("nope.csv").to_str().unwrap()},
            "model": {"horizon": 6, "scenarios": 4},
            "out_dir": dir.path().join("out").to_str().unwrap()
        }),
    );
    let (code, _) = run_code(&["train", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code, 2);

    // a learning rate that overflows the parameters mid-run
    let windows_csv = synth_into(dir.path(), 16);
    let out = dir.path().join("boom");
    let config_path = dir.path().join("boom.json");
    write_json(&config_path, &run_config(&windows_csv, &out, 5, 1e160));
    let (code, output) = run_code(&["train", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code, 3, "output: {output}");
    assert!(output.contains("epoch"), "output: {output}");
    assert!(output.contains("batch"), "output: {output}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    write_json(
        &config_path,
        &json!({"model": {"horizon": 6}, "episodes": 5}),
    );
    let (code, output) = run_code(&["train", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(output.contains("episodes") || output.contains("unknown"), "output: {output}");
}
