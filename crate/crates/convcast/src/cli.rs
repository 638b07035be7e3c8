//! Command implementations behind the binary: ingest, train, benchmark,
//! evaluate, export-curves. Kept in the library so they can be driven and
//! tested without spawning processes.

use crate::config::RunConfig;
use crate::dataset::{Split, WindowedDataset};
use crate::error::{Error, Result};
use crate::experiments::{
    build_model, evaluate, run_benchmark_suite, run_single, EvalMetrics, ModelOptions, SpecId,
    SuiteReport,
};
use crate::ingest::{parse_ohlcv_csv, select_features, IngestSummary};
use crate::nn::Model;
use crate::train::TrainConfig;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Process exit codes: 0 success, 1 runtime failure, 2 usage/config error.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::UnknownSpec(_) | Error::BadRatios(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn open_data(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse, filter, window, split, and scale per the run configuration.
pub fn load_dataset(config: &RunConfig) -> Result<(WindowedDataset, IngestSummary)> {
    let file = open_data(&config.data_path)?;
    let (series, summary) = parse_ohlcv_csv(std::io::BufReader::new(file))?;
    let series = series.filter_range(config.start_date, config.end_date)?;
    let features = select_features(&series, config.price_column)?;
    let dataset = WindowedDataset::build(&features, config.window_len, config.split_ratios)?;
    Ok((dataset, summary))
}

fn model_options(config: &RunConfig) -> ModelOptions {
    ModelOptions {
        fc_width: config.fc_width,
        conv_padding: config.conv_padding,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `ingest`: parse and summarize the input data.
pub fn cmd_ingest(config: &RunConfig, out: &mut impl Write) -> Result<()> {
    config.validate()?;
    let file = open_data(&config.data_path)?;
    let (series, summary) = parse_ohlcv_csv(std::io::BufReader::new(file))?;
    let filtered = series.filter_range(config.start_date, config.end_date)?;
    let span = |a: Option<chrono::NaiveDate>, b: Option<chrono::NaiveDate>| {
        format!(
            "{}..{}",
            a.map_or_else(|| "-".into(), |d| d.to_string()),
            b.map_or_else(|| "-".into(), |d| d.to_string())
        )
    };
    writeln!(out, "file: {}", config.data_path.display()).ok();
    writeln!(
        out,
        "rows: {} parsed: {} dropped: {} ohlc_warnings: {}",
        summary.rows_total, summary.rows_parsed, summary.rows_dropped_null, summary.ohlc_violations
    )
    .ok();
    writeln!(out, "span: {}", span(summary.first_date, summary.last_date)).ok();
    writeln!(
        out,
        "in range {}: {} rows",
        span(config.start_date, config.end_date),
        filtered.len()
    )
    .ok();
    Ok(())
}

/// Artifact bundle metadata for one training run.
#[derive(Debug, Serialize)]
struct RunMetrics<'a> {
    model: SpecId,
    seed: u64,
    metrics: &'a EvalMetrics,
    best_epoch: usize,
    stopped_epoch: usize,
    stage2_epochs: usize,
}

fn run_dir(config: &RunConfig, model: SpecId, seed: u64) -> PathBuf {
    config
        .resolved_output_dir()
        .join(format!("{model}_seed{seed}"))
}

/// `train`: two-stage train one model, write weights/curves/metrics, print
/// the headline numbers.
pub fn cmd_train(config: &RunConfig, model: SpecId, seed: u64, out: &mut impl Write) -> Result<PathBuf> {
    config.validate()?;
    let (dataset, _) = load_dataset(config)?;
    let train_config = TrainConfig { seed, ..config.train };
    let success = run_single(model, &dataset, &model_options(config), &train_config)?;

    let dir = run_dir(config, model, seed);
    create_dir(&dir)?;
    let weights = success.model.as_ref().expect("run_single keeps the model");
    write_file(&dir.join("weights.json"), &weights.to_json()?)?;
    let mut curves = Vec::new();
    success.curves.write_csv(&mut curves).expect("vec write");
    write_file(&dir.join("curves.csv"), &String::from_utf8(curves).expect("utf8"))?;
    let metrics_doc = RunMetrics {
        model,
        seed,
        metrics: &success.metrics,
        best_epoch: success.best_epoch,
        stopped_epoch: success.stopped_epoch,
        stage2_epochs: success.stage2_epochs,
    };
    write_file(
        &dir.join("metrics.json"),
        &serde_json::to_string_pretty(&metrics_doc)?,
    )?;

    writeln!(out, "model {model} seed {seed}").ok();
    writeln!(
        out,
        "stage 1: stopped at epoch {} (best epoch {})",
        success.stopped_epoch, success.best_epoch
    )
    .ok();
    writeln!(out, "stage 2: retrained for {} epochs on train+val", success.stage2_epochs).ok();
    writeln!(
        out,
        "test accuracy {:.4} precision {:.4} (n={})",
        success.metrics.accuracy, success.metrics.precision, success.metrics.n_samples
    )
    .ok();
    writeln!(out, "artifacts: {}", dir.display()).ok();
    Ok(dir)
}

/// `benchmark`: the full suite. Writes `report.json`, `report.csv`, and one
/// curve CSV per run; exits successfully if at least one run succeeded.
pub fn cmd_benchmark(config: &RunConfig, out: &mut impl Write) -> Result<SuiteReport> {
    config.validate()?;
    let (dataset, _) = load_dataset(config)?;
    let report = run_benchmark_suite(
        &dataset,
        &config.models,
        &config.seeds,
        &model_options(config),
        &config.train,
        config.jobs,
    )?;

    let dir = config.resolved_output_dir();
    let curve_dir = dir.join("curves");
    create_dir(&curve_dir)?;
    write_file(&dir.join("report.json"), &report.to_json()?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).expect("vec write");
    write_file(&dir.join("report.csv"), &String::from_utf8(csv).expect("utf8"))?;
    for run in &report.runs {
        if let Ok(success) = &run.outcome {
            let mut curves = Vec::new();
            success.curves.write_csv(&mut curves).expect("vec write");
            write_file(
                &curve_dir.join(format!("{}_seed{}.csv", run.model, run.seed)),
                &String::from_utf8(curves).expect("utf8"),
            )?;
        }
    }

    writeln!(out, "{:<10} {:>9} {:>10} {:>6}", "model", "accuracy", "precision", "runs").ok();
    for agg in &report.aggregates {
        let fmt = |v: Option<f64>| v.map_or("failed".into(), |x| format!("{x:.4}"));
        writeln!(
            out,
            "{:<10} {:>9} {:>10} {:>6}",
            agg.model.to_string(),
            fmt(agg.median_accuracy),
            fmt(agg.median_precision),
            agg.seeds_succeeded
        )
        .ok();
    }
    writeln!(out, "{:<10} {:>9.4}", "random", report.baselines.random_guess_accuracy).ok();
    writeln!(out, "{:<10} {:>9.4}", "majority", report.baselines.majority_accuracy).ok();
    writeln!(out, "report: {}", dir.join("report.json").display()).ok();

    let any_ok = report.runs.iter().any(|r| r.outcome.is_ok());
    if !any_ok {
        return Err(Error::InvalidConfig("every benchmark run failed".into()));
    }
    Ok(report)
}

/// `evaluate`: load saved weights and score them on the test split.
pub fn cmd_evaluate(config: &RunConfig, weights_path: &Path, out: &mut impl Write) -> Result<EvalMetrics> {
    config.validate()?;
    let text =
        fs::read_to_string(weights_path).map_err(|e| Error::io(weights_path.display().to_string(), e))?;
    let mut model = Model::from_json(&text)?;
    let (dataset, _) = load_dataset(config)?;
    let test: Vec<usize> = dataset.indices(Split::Test).collect();
    let metrics = evaluate(&mut model, &dataset, &test)?;
    writeln!(
        out,
        "accuracy {:.4} precision {:.4} (n={}, predicted_up={}, up_fraction={:.4})",
        metrics.accuracy, metrics.precision, metrics.n_samples, metrics.predicted_up, metrics.up_fraction
    )
    .ok();
    if metrics.no_up_predictions {
        writeln!(out, "note: model never predicted Up; precision reported as 0").ok();
    }
    Ok(metrics)
}

/// `export-curves`: merge the per-run curve CSVs of a benchmark output
/// directory into one long-format table for plotting.
pub fn cmd_export_curves(runs_dir: &Path, output: &Path, out: &mut impl Write) -> Result<usize> {
    let curve_dir = runs_dir.join("curves");
    let entries = fs::read_dir(&curve_dir).map_err(|e| Error::io(curve_dir.display().to_string(), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no curve files under {}",
            curve_dir.display()
        )));
    }

    let mut merged = String::from("model,seed,epoch,train_loss,val_loss\n");
    for path in &files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (model, seed) = stem.rsplit_once("_seed").ok_or_else(|| {
            Error::InvalidConfig(format!("unexpected curve file name: {}", path.display()))
        })?;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for line in text.lines().skip(1) {
            merged.push_str(model);
            merged.push(',');
            merged.push_str(seed);
            merged.push(',');
            merged.push_str(line);
            merged.push('\n');
        }
    }
    write_file(output, &merged)?;
    writeln!(out, "merged {} curve files into {}", files.len(), output.display()).ok();
    Ok(files.len())
}

/// `dump-dataset`: audit CSV of every sample's split, anchor, target, label.
pub fn cmd_dump_dataset(config: &RunConfig, output: &Path, out: &mut impl Write) -> Result<()> {
    config.validate()?;
    let (dataset, _) = load_dataset(config)?;
    let mut buf = Vec::new();
    dataset.write_dump(&mut buf).expect("vec write");
    write_file(output, &String::from_utf8(buf).expect("utf8"))?;
    writeln!(out, "wrote {} samples to {}", dataset.len(), output.display()).ok();
    Ok(())
}

/// Convenience used by `train`/`evaluate` flag parsing.
pub fn parse_model_id(s: &str) -> Result<SpecId> {
    s.parse()
}

/// Check that a freshly built model matches the weights file structure
/// (guards accidental cross-architecture evaluation).
pub fn weights_compatible(config: &RunConfig, id: SpecId, weights: &Model) -> bool {
    build_model(id, &model_options(config), config.window_len, 2, 0)
        .map(|m| {
            m.count_params() == weights.count_params()
                && m.input_shape() == weights.input_shape()
        })
        .unwrap_or(false)
}
